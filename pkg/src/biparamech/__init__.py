"""Conformal bi-para mechanics: synthesis, integration and audit of
Euler-Lagrange and Hamilton equations over para-complex coordinates."""

from .para_algebra import (
    E_MINUS,
    E_PLUS,
    J,
    ONE,
    ZERO,
    DomainError,
    IdempotentPair,
    KindMismatch,
    ParaComplex,
    ZeroDivisor,
)
from .symbolic import (
    CoordinateChart,
    EvalState,
    ExpressionError,
    ExprSyntaxError,
    IndexOutOfRange,
    UnknownVariable,
    compile_expr,
    differentiate,
    evaluate,
    parse,
    simplify,
    to_text,
)
from .eom import (
    DegenerateLagrangian,
    ExplicitODE,
    HamiltonianProblem,
    ImplicitODE,
    LagrangianProblem,
    Semispray,
    SingularDenominator,
    audit_hamilton,
    audit_lagrange,
    canonical_two_form,
    el_equation_texts,
    energy,
    ham_equation_texts,
    lagrangian_two_form,
    liouville_one_form,
    liouville_vector_field,
    synthesize_el,
    synthesize_ham,
    vertical_differential,
)
from .dynamics import (
    IntegratorConfig,
    PhaseState,
    StepFailure,
    Trajectory,
    el_rhs,
    energy_along,
    ham_rhs,
    integrate,
    make_el_rhs,
    make_ham_rhs,
    residual_series,
    solve_para_linear,
)
from .verify import (
    CheckResult,
    Report,
    audit_battery,
    check_fd,
    check_reduction,
    conservation_report,
    fixture_problem,
    run_all,
    selftest_algebra,
)

__version__ = "0.1.0"

__all__ = [
    "CheckResult",
    "CoordinateChart",
    "DegenerateLagrangian",
    "DomainError",
    "E_MINUS",
    "E_PLUS",
    "EvalState",
    "ExplicitODE",
    "ExpressionError",
    "ExprSyntaxError",
    "HamiltonianProblem",
    "IdempotentPair",
    "ImplicitODE",
    "IndexOutOfRange",
    "IntegratorConfig",
    "J",
    "KindMismatch",
    "LagrangianProblem",
    "ONE",
    "ParaComplex",
    "PhaseState",
    "Report",
    "Semispray",
    "SingularDenominator",
    "StepFailure",
    "Trajectory",
    "UnknownVariable",
    "ZERO",
    "ZeroDivisor",
    "audit_battery",
    "audit_hamilton",
    "audit_lagrange",
    "canonical_two_form",
    "check_fd",
    "check_reduction",
    "compile_expr",
    "conservation_report",
    "differentiate",
    "el_equation_texts",
    "el_rhs",
    "energy",
    "energy_along",
    "evaluate",
    "fixture_problem",
    "ham_equation_texts",
    "ham_rhs",
    "integrate",
    "lagrangian_two_form",
    "liouville_one_form",
    "liouville_vector_field",
    "make_el_rhs",
    "make_ham_rhs",
    "parse",
    "residual_series",
    "run_all",
    "selftest_algebra",
    "simplify",
    "solve_para_linear",
    "synthesize_el",
    "synthesize_ham",
    "to_text",
    "vertical_differential",
    "__version__",
]
