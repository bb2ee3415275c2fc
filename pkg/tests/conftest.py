import pytest

from hitframe.direction import KSeqRecord, TransformerConfig, train_direction_model
from hitframe.nn import LrSchedule
from hitframe.synth import SynthConfig, generate_rally, kseq_record


def records_for(cfg, indices):
    return [KSeqRecord.from_json(kseq_record(generate_rally(cfg, i))) for i in indices]


@pytest.fixture(scope="session")
def small_records():
    return records_for(SynthConfig(seed=11), range(24))


@pytest.fixture(scope="session")
def small_direction_model(small_records):
    cfg = TransformerConfig(d_model=16, heads=2, layers=1, d_ff=32, max_len=120, proj_hidden=16)
    model, _ = train_direction_model(small_records[:16], cfg, LrSchedule(1e-3), epochs=2, seed=0)
    return model


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def report_criterion():
    def report(number, name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {name} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return report
