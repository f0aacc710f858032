"""Shared fixtures: the synthetic site and one full pipeline run per session."""

from __future__ import annotations

import time

import pytest
from click.testing import CliRunner

from morpholcz.cli import main


@pytest.fixture(scope="session")
def synth_site(tmp_path_factory):
    """Synthetic city inputs plus the generated site config."""
    root = tmp_path_factory.mktemp("site")
    result = CliRunner().invoke(main, ["synth", "--out", str(root), "--seed", "0"])
    assert result.exit_code == 0, result.output
    return root


@pytest.fixture(scope="session")
def pipeline_run(synth_site):
    """One timed end-to-end run; downstream tests reuse its outputs."""
    t0 = time.perf_counter()
    result = CliRunner().invoke(main, ["run", "--config", str(synth_site / "site.ini")])
    elapsed = time.perf_counter() - t0
    assert result.exit_code == 0, result.output
    return {"site": synth_site, "out": synth_site / "out", "seconds": elapsed}
