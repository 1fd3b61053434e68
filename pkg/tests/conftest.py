import numpy as np
import pytest

import mwpgen
from mwpgen import corpus, cskg
from mwpgen import numerics as nm


def finite_difference_check(params, loss_fn, h=1e-5, rtol=1e-4,
                            entries_per_param=3, seed=0):
    """Compare reverse-mode gradients of ``loss_fn`` against central finite
    differences on a few randomly chosen entries of every parameter.

    ``loss_fn`` must be a pure function of the parameter values returning a
    scalar Tensor. Returns the worst relative error seen.
    """
    with nm.Tape() as tape:
        loss = loss_fn()
        grads = nm.backward(loss, tape)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in params.items():
        g = grads.get(id(p))
        if g is None:
            g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        idxs = rng.choice(flat.size, size=min(entries_per_param, flat.size),
                          replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().item()
            flat[i] = orig - h
            down = loss_fn().item()
            flat[i] = orig
            fd = (up - down) / (2 * h)
            an = g.reshape(-1)[i]
            denom = max(abs(fd), abs(an), 1e-6)
            rel = abs(fd - an) / denom
            assert rel < rtol, (
                f"gradient mismatch for {name}[{i}]: analytic {an}, fd {fd}, "
                f"rel {rel:.2e}"
            )
            worst = max(worst, rel)
    return worst


# one human-readable line per acceptance criterion, shown in the terminal
# summary so it survives pytest's output capture
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def kg():
    return cskg.load_triples(mwpgen.default_cskg_path())


@pytest.fixture(scope="session")
def templates():
    return corpus.load_templates(mwpgen.default_templates_path())


@pytest.fixture(scope="session")
def small_corpus(kg, templates):
    return corpus.synth_corpus(templates, kg, 24, seed=7)
