from datetime import datetime, timedelta, timezone

import pytest

from geodiverse.corpus import MicroPost
from geodiverse.gazetteer import Level, ResolvedLocation, load_hierarchy

T0 = datetime(2012, 10, 28, 10, 0, tzinfo=timezone.utc)

CHILE_ROWS = [
    {"id": "CL", "name": "Chile", "level": "country", "parent_id": ""},
    {"id": "RM", "name": "Región Metropolitana", "level": "region", "parent_id": "CL"},
    {"id": "R1", "name": "Tarapacá", "level": "region", "parent_id": "CL"},
    {"id": "P-SCL", "name": "Santiago", "level": "province", "parent_id": "RM"},
    {"id": "P-COR", "name": "Cordillera", "level": "province", "parent_id": "RM"},
    {"id": "P-IQQ", "name": "Iquique", "level": "province", "parent_id": "R1"},
    {"id": "M-NUN", "name": "Ñuñoa", "level": "municipality", "parent_id": "P-SCL"},
    {"id": "M-PRO", "name": "Providencia", "level": "municipality", "parent_id": "P-SCL"},
    {"id": "M-PTE", "name": "Puente Alto", "level": "municipality", "parent_id": "P-COR"},
    {"id": "M-IQQ", "name": "Iquique", "level": "municipality", "parent_id": "P-IQQ"},
    {"id": "M-AHO", "name": "Alto Hospicio", "level": "municipality", "parent_id": "P-IQQ"},
]


@pytest.fixture
def chile():
    return load_hierarchy(CHILE_ROWS)


def make_post(pid, author, text, unit=None, level=Level.MUNICIPALITY, minutes=0, **kw):
    loc = ResolvedLocation(unit, level) if unit is not None else None
    return MicroPost(
        id=str(pid),
        author_id=str(author),
        text=text,
        timestamp=T0 + timedelta(minutes=minutes),
        author_location=loc,
        **kw,
    )


@pytest.fixture
def toy_posts():
    """Ten posts from five authors across the three provinces of the Chile fixture."""
    rows = [
        ("u1", "M-NUN", "vota #nunoa hoy"),
        ("u1", "M-NUN", "#nunoa decide"),
        ("u2", "M-PRO", "vota providencia #santiago"),
        ("u2", "M-PRO", "hoy vota"),
        ("u3", "M-PTE", "puente alto #cordillera vota"),
        ("u3", "M-PTE", "#cordillera hoy"),
        ("u3", "M-PTE", "cordillera cordillera"),
        ("u4", "M-IQQ", "#iquique vota hoy"),
        ("u5", "M-AHO", "alto hospicio #iquique"),
        ("u5", "M-AHO", "#iquique #iquique playa"),
    ]
    return [make_post(f"p{i}", a, t, unit, minutes=i) for i, (a, unit, t) in enumerate(rows)]


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict line and echo it to the terminal."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail}"
        ACCEPTANCE_LINES.append(line)
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        else:
            print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
