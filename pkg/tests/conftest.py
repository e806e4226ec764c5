import pytest

from switchpred.logs import assemble_sessions, iter_records

# Three sessions covering every record type, a blended switch, a click on
# an unseen SERP and a click on a URL not in its result list.
FIXTURE_LOG = """\
1\t3\tM\t7\tP
1\t0\tQ\t0\t100\t11,12,13,14,15,16,17,18,19,20
1\t50\tC\t0\t16
1\t60\tS
1\t120\tC\t0\t19
1\t400\tQ\t1\t101\t21,22,23,24,25,26,27,28,29,30
1\t420\tC\t0\t11
2\t3\tM\t7\tN
2\t0\tQ\t0\t100\t11,12,13,14,15,16,17,18,19,20
2\t10\tC\t0\t11
2\t30\tQ\t1\t100\t11,12,13,14,15,16,17,18,19,20
3\t9\tM\t8\tH
3\t0\tQ\t0\t102\t31,32,33,34,35,36,37,38,39,40
3\t5\tS
3\t7\tS
3\t20\tC\t4\t99
3\t25\tC\t0\t77
"""


def sessions_from_text(text):
    return list(assemble_sessions(iter_records(text.splitlines())))


@pytest.fixture
def fixture_sessions():
    return sessions_from_text(FIXTURE_LOG)


@pytest.fixture
def fixture_log(tmp_path):
    path = tmp_path / "fixture.tsv"
    path.write_text(FIXTURE_LOG)
    return path
