"""Exception types shared across the simulator."""


class EngineGuardError(RuntimeError):
    """A run was configured outside an engine's validity or size guard."""


class StepSizeError(EngineGuardError):
    """The first-order step drifted further from trace/norm one than dt allows."""


class ImpossibleJump(ArithmeticError):
    """A jump operator annihilated the state (no support for that jump)."""


class NumericalInvariantError(ArithmeticError):
    """A probability, fidelity or density-operator invariant was violated."""
