"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: ``ConfigError`` -> 1, ``DataError`` -> 2,
``NumericError`` -> 3.
"""


class MupsError(Exception):
    pass


class ConfigError(MupsError, ValueError):
    """Invalid parameters or presets."""


class DataError(MupsError, ValueError):
    """Malformed, empty or inconsistent input data."""


class DegeneratePatchError(DataError):
    def __init__(self, raw_count, query_index=None, scale_index=None):
        self.raw_count = raw_count
        self.query_index = query_index
        self.scale_index = scale_index
        msg = f"degenerate patch: {raw_count} point(s) in ball"
        if query_index is not None:
            msg += f" (query {query_index}"
            msg += f", scale {scale_index})" if scale_index is not None else ")"
        super().__init__(msg)

    def with_scale(self, scale_index):
        return DegeneratePatchError(self.raw_count, self.query_index, scale_index)


class NumericError(MupsError, ArithmeticError):
    """Non-finite values or collapsed outputs during computation."""
