from typing import Optional


class LabError(Exception):
    """Base class; `module` names the module whose invariant failed."""

    module = "lab"

    def __init__(self, message: str, module: Optional[str] = None):
        super().__init__(message)
        if module is not None:
            self.module = module


class ConfigurationError(LabError, ValueError):
    module = "config"


class InvalidDensityError(ConfigurationError):
    module = "grid"


class ModelInconsistencyError(LabError, ValueError):
    module = "dispersion"


class SingularModeError(LabError, ValueError):
    module = "bogoliubov"


class DivergentOccupationError(LabError, ValueError):
    module = "condensation"


class NoSoundSpeedError(LabError, ValueError):
    module = "dispersion"


class NumericalError(LabError, RuntimeError):
    module = "kinetics"


class DivergenceError(NumericalError):
    def __init__(self, message: str, trajectory=None):
        super().__init__(message)
        # last good trajectory, up to the final finite snapshot
        self.trajectory = trajectory


class StepSizeError(NumericalError):
    def __init__(self, message: str, trajectory=None, clipped_mass: float = 0.0):
        super().__init__(message)
        self.trajectory = trajectory
        self.clipped_mass = clipped_mass


class ConfigValidationError(ConfigurationError):
    """Every violated rule of a config file, as `config.Diagnostic` entries."""

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])
