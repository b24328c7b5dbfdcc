"""Exception hierarchy shared by every specmesh module.

The CLI maps these onto its exit-code contract:
parse errors -> 2, argument/structural errors -> 3, numerical aborts -> 4,
verification failures -> 5.
"""


class SpecmeshError(Exception):
    """Base class for all package errors."""


class ParseError(SpecmeshError):
    """Malformed input file (OBJ record, config JSON, tensor file)."""


class ArgumentError(SpecmeshError):
    """A caller-supplied value violates an operation's precondition."""


class StructuralError(SpecmeshError):
    """Input data is well-formed but structurally invalid (bad face index,
    unreachable coarsening target, inconsistent topology)."""


class NumericalError(SpecmeshError):
    """A numerical routine failed: non-finite values, non-convergence."""


class VerificationError(SpecmeshError):
    """An oracle or gradient check exceeded its tolerance."""
