import pytest

from tensorplace import (
    BackendDescriptor,
    BackendKind,
    OpCost,
    PatternRegistry,
    SimMeasurer,
    SimProfile,
)
from tensorplace.rules import (
    FusionTransition,
    OpClass,
    OpValidity,
    PatternRule,
)

import util

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def criterion_report():
    """Collector for the acceptance suite's one-line verdicts; the lines are
    echoed again in the terminal summary so they survive output capture."""
    def record(line: str) -> None:
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def chain3():
    return util.conv_add_relu_graph()


@pytest.fixture
def diamond():
    return util.diamond_graph()


@pytest.fixture
def two_backend_setup(chain3):
    """Backend A: unit-overhead singletons. Backend B: one fused pattern for
    the whole chain, cheaper in total. Frozen expectation at epsilon 0.01:
    A costs 3.03, B costs 2.51, B wins with a single kernel."""
    registry = PatternRegistry()
    registry.add_backend(BackendDescriptor("A", BackendKind.OP_KERNEL_LIBRARY))
    registry.add_backend(BackendDescriptor("B", BackendKind.OP_KERNEL_LIBRARY))
    for op in ("conv2d", "add", "relu"):
        registry.add_pattern("A", f"{op}()")
    registry.add_pattern("B", "relu(add(conv2d(*, *), *))")
    prof_a = SimProfile("A", {"conv2d": OpCost(0.0, 1.0),
                              "add": OpCost(0.0, 1.0),
                              "relu": OpCost(0.0, 1.0)})
    prof_b = SimProfile("B", {"conv2d": OpCost(0.0, 1.5),
                              "add": OpCost(0.0, 0.5),
                              "relu": OpCost(0.0, 0.5)},
                        fusion_discount=1.0)
    return registry, SimMeasurer({"A": prof_a, "B": prof_b})


@pytest.fixture
def chain_rule():
    """conv2d is the fusable anchor; add and relu extend it elementwise."""
    return PatternRule(
        backend="B",
        op_validity=(
            OpValidity("conv2d", (), OpClass.FUSABLE),
            OpValidity("add", (), OpClass.ELEMWISE),
            OpValidity("relu", (), OpClass.ELEMWISE),
        ),
        fusion_transitions=(
            FusionTransition(OpClass.FUSABLE, OpClass.ELEMWISE,
                             OpClass.FUSABLE),
            FusionTransition(OpClass.ELEMWISE, OpClass.ELEMWISE,
                             OpClass.ELEMWISE),
        ))
