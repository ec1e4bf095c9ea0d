"""Token, sequence and representation scoring for small transformer language models."""

from ._lmscore import (
    ChecksumError,
    ConfigError,
    FormatError,
    InputError,
    LanguageModel,
    LmscoreError,
    ModelConfig,
    NumericError,
    Scorer,
    ShapeError,
    SpanLookupError,
    UnsupportedError,
    VocabularyError,
    evaluate_abductive,
    evaluate_minimal_pairs,
    extract_representation,
    make_fixture,
)

__all__ = [
    "ChecksumError",
    "ConfigError",
    "FormatError",
    "InputError",
    "LanguageModel",
    "LmscoreError",
    "ModelConfig",
    "NumericError",
    "Scorer",
    "ShapeError",
    "SpanLookupError",
    "UnsupportedError",
    "VocabularyError",
    "evaluate_abductive",
    "evaluate_minimal_pairs",
    "extract_representation",
    "make_fixture",
]
