class CwelabError(Exception):
    pass


class ConvergenceError(CwelabError):
    def __init__(self, message, residual=None):
        super().__init__(message if residual is None else f"{message} (last residual {residual:.3e})")
        self.residual = residual


class InsufficientDataError(CwelabError):
    pass


class MalformedObservationError(CwelabError):
    pass


class ConfigError(CwelabError):
    pass


class InfeasibleError(CwelabError):
    pass
