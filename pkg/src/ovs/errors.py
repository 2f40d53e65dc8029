"""Exception types raised across the pipeline."""


class OVSError(Exception):
    """Base class; ``reason`` is a short machine-parseable token."""

    reason = "error"

    def __str__(self):
        msg = super().__str__()
        return f"{self.reason}: {msg}" if msg else self.reason


class DimensionMismatch(OVSError, ValueError):
    reason = "dimension_mismatch"


class TooFewKeypoints(OVSError):
    reason = "too_few_keypoints"


class DegenerateFit(OVSError):
    reason = "degenerate_fit"


class EmptySharedView(OVSError):
    reason = "empty_shared_view"


class EmptyRegion(OVSError, ValueError):
    reason = "empty_region"


class FitFailure(OVSError):
    reason = "fit_failure"


class TooShort(OVSError, ValueError):
    reason = "too_short"


class DegenerateCrop(OVSError):
    reason = "degenerate_crop"


class SourceTooSmall(OVSError, ValueError):
    reason = "source_too_small"


class PanoramaTooSmall(OVSError, ValueError):
    reason = "panorama_too_small"


class ConfigError(OVSError, ValueError):
    reason = "config_error"


class ParseError(ConfigError):
    reason = "parse_error"

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class UnknownKey(ConfigError):
    reason = "unknown_key"
