"""Exception types raised across the package."""


class TvsurvError(Exception):
    """Base class for all tvsurv errors."""


class MalformedRecordError(TvsurvError):
    """A subject record violates its structural invariants."""


class BeforeEntryError(TvsurvError):
    """A covariate stream was queried before its first change time."""


class SchemaError(TvsurvError):
    """Covariate data does not conform to the declared schema."""


class DegenerateRiskSetError(TvsurvError):
    """An event time has an empty (or overdrawn) LTRC risk set."""


class DegenerateExposureError(TvsurvError):
    """An event row has zero cumulative-hazard exposure."""


class NoOobTreesError(TvsurvError):
    """A subject is in-bag for every tree, so no OOB estimate exists."""


class ConfigError(TvsurvError):
    """A configuration file or generator setup failed validation."""


class CalibrationError(TvsurvError):
    """Censoring-rate calibration could not reach its target."""
