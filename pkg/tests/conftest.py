import pytest

from qracp.term import parse_model

SMALL_MODEL = """\
actions:
  quantum a, b
  classical c, d, k
gamma:
  c, d -> k
quantum:
  dim 2
  a = X
  b = H
process:
  P = a . b
  Q = b . a
  R = a + a
  S = a
  T = a . tau . b
  U = a . b
  V = tau . a
  W = tau
  Z = delta
  L = c . L
  N = a
"""


@pytest.fixture
def small_model():
    return parse_model(SMALL_MODEL)


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "small.q"
    path.write_text(SMALL_MODEL)
    return path
