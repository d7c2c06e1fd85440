import numpy as np
import pytest

from spinemorph.synthetic import (
    SpineSpec,
    VertebraSpec,
    box_vertebra,
    cube_mesh,
    generate_spine,
    icosphere,
    sample_spine_spec,
)


@pytest.fixture
def cube():
    return cube_mesh()


@pytest.fixture(scope="session")
def sphere():
    return icosphere(radius=10.0, subdivisions=3)


@pytest.fixture(scope="session")
def fine_sphere():
    return icosphere(radius=10.0, subdivisions=5)


@pytest.fixture(scope="session")
def box_vert():
    return box_vertebra(40.0, 30.0, 25.0, resolution=0.5)


@pytest.fixture(scope="session")
def straight_spine():
    spec = SpineSpec(seed=0, lordosis_angle=0.0, vertebrae=(VertebraSpec(50.0, 35.0, 28.0),) * 5)
    return generate_spine(spec)


@pytest.fixture(scope="session")
def random_spines():
    return [generate_spine(sample_spine_spec(11, i)) for i in range(10)]


def random_rotation(rng, max_deg=10.0):
    from spinemorph.synthetic import rotation_matrix

    axis = rng.normal(size=3)
    return rotation_matrix(axis, rng.uniform(-max_deg, max_deg))


def angle_deg(a, b):
    a = np.asarray(a) / np.linalg.norm(a)
    b = np.asarray(b) / np.linalg.norm(b)
    return np.degrees(np.arccos(np.clip(a @ b, -1, 1)))


def tree_digest(root):
    """Map of relative path -> sha256 for every file below ``root``."""
    import hashlib
    from pathlib import Path

    root = Path(root)
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


# --- acceptance summary -----------------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = getattr(item, "acceptance_detail", "")
        _ACCEPTANCE[number] = (title, report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, outcome, detail = _ACCEPTANCE[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        line = f"[{status}] {number}. {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
