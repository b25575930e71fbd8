"""Exception hierarchy shared across the package.

The three bases map onto CLI exit codes: ConfigError -> 2,
BackendError -> 3, DataError -> 4.
"""


class ConfigError(Exception):
    """Invalid or unresolvable run configuration."""


class BackendError(Exception):
    """A remote backend (SPARQL endpoint, KGQA API, classifier service) failed."""


class DataError(Exception):
    """Input data violates the expected format or content contract."""
