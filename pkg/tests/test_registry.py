import pytest

from supportkit.registry import (ConceptRegistry, match_sentence, opposite, sentence_framing,
                                 text_framing)
from supportkit.text import tokenize


def _mini(**over):
    concept = {
        "concept_id": "pleural_effusion",
        "present_patterns": ["pleural effusion", "effusion"],
        "absent_patterns": ["costophrenic angles are sharp"],
        "negation_cues": ["no", "without"],
    }
    concept.update(over)
    return ConceptRegistry.from_dict({"concepts": [concept]})


def test_opposite():
    assert opposite("present") == "absent" and opposite("absent") == "present"
    with pytest.raises(ValueError):
        opposite("maybe")


def test_default_claim_templates(registry):
    c = registry["pleural_effusion"]
    assert c.render_claim("present") == "pleural effusion is present"
    assert c.render_claim("absent") == "pleural effusion is absent"


def test_custom_templates_rendered_verbatim():
    reg = _mini(claim_templates={"present": "there is {name}", "absent": "{concept_id}: none"})
    c = reg["pleural_effusion"]
    assert c.render_claim("present") == "there is pleural effusion"
    assert c.render_claim("absent") == "pleural_effusion: none"


def test_registry_validation():
    with pytest.raises(ValueError):
        _mini(absent_patterns=[])
    with pytest.raises(ValueError):
        ConceptRegistry.from_dict({"concepts": [_mini().to_dict()["concepts"][0]] * 2})
    with pytest.raises(ValueError):
        _mini(claim_templates={"present": "x", "absent": " "})
    reg = _mini(present_patterns=[], absent_patterns=[], evaluation_only=True)
    assert reg["pleural_effusion"].evaluation_only
    with pytest.raises(KeyError):
        reg["nope"]


def test_round_trip(tmp_path, registry):
    path = tmp_path / "reg.json"
    registry.save(path)
    assert ConceptRegistry.load(path).to_dict() == registry.to_dict()


def test_match_negation_window():
    c = _mini()["pleural_effusion"]
    m = match_sentence(tokenize("No gross effusion."), c)
    assert (m.present, m.negated) == (0, 1)
    # the cue must precede the hit inside the sentence
    m = match_sentence(tokenize("Effusion, no change."), c)
    assert (m.present, m.negated) == (1, 0)
    # nested patterns count once
    m = match_sentence(tokenize("Small pleural effusion."), c)
    assert (m.present, m.negated) == (1, 0)


def test_framings():
    c = _mini()["pleural_effusion"]
    assert sentence_framing(tokenize("The costophrenic angles are sharp."), c) == "absent"
    assert sentence_framing(tokenize("Left effusion but no right effusion."), c) is None
    assert text_framing("Large effusion. Costophrenic angles are sharp.", c) is None
    assert text_framing("Large effusion. Stable.", c) == "present"


def test_vocabulary(registry):
    # content tokens of present + absent patterns, stopwords dropped
    assert registry["pleural_effusion"].vocabulary() == {
        "pleural", "effusion", "effusions", "blunting", "costophrenic", "angle", "blunted",
        "angles", "sharp"}
