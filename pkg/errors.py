"""
Error Hierarchy
Data errors derive from CascadeVeracityError (CLI exit code 2); configuration
problems raise ConfigError (CLI exit code 1)
"""

from typing import List, Optional


class CascadeVeracityError(ValueError):
    """Base class for every data error raised by the library"""


class InvalidCascadeError(CascadeVeracityError):
    """A cascade violates the arborescence rules"""

    def __init__(self, message: str, violations: Optional[List[str]] = None):
        super().__init__(message)
        self.violations = list(violations or [])


class DatasetParseError(CascadeVeracityError):
    """Malformed dataset, feature or model file"""


class MissingAttributeError(CascadeVeracityError):
    """A node field required by a tag scheme or attribute is absent"""


class EmptyDatasetError(CascadeVeracityError):
    """Nothing usable remains after filtering"""


class SingleClassError(CascadeVeracityError):
    """Training labels contain fewer than two classes"""


class NonFiniteFeatureError(CascadeVeracityError):
    """A feature matrix holds NaN or infinite entries"""


class InternerMismatchError(CascadeVeracityError):
    """Feature vectors were produced by different interners"""


class SplitError(CascadeVeracityError):
    """A grouped split cannot be formed"""


class TrainingDataError(CascadeVeracityError):
    """Features and labels cannot be trained on (shape mismatch, non-binary labels)"""


class ConfigError(ValueError):
    """Invalid generator, experiment or command-line configuration"""
