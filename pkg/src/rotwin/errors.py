"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class RotwinError(Exception):
    exit_code = 1


class ConfigurationError(RotwinError):
    """Invalid endpoint specs, hierarchy, weights or config file."""

    exit_code = 2


class ParseError(ConfigurationError):
    """Malformed dataset file. Carries the file line number (header is line 1) and column."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.row = row
        self.column = column


class ResourceError(RotwinError):
    exit_code = 2


class AnalysisError(RotwinError):
    pass


class InferenceError(AnalysisError):
    pass
