import numpy as np
import pytest

from arcboost.decoder import DecoderConfig, advance_frame, finalize, init_channel
from arcboost.fst import build_csr, parse_symbol_table, parse_text_fst
from arcboost.scores import ScoreMatrix

# Reference 4-state graph used throughout: two paths from state 0 to the
# final state 2, one emitting alpha-bravo (with an epsilon shortcut through
# state 3), the other charlie-bravo.
F1_TEXT = """\
0 1 1 1 0.5
0 3 3 3 0.9
1 2 2 2 0.3
1 3 0 0 0.1
3 2 2 2 0.7
2 0.0
3 0.4
"""

F1_SYMS = """\
<eps> 0
alpha 1
bravo 2
charlie 3
"""

# Linear graph with a silence self-loop, for endpoint tests: emit "go" once,
# then silence frames accumulate at state 1.
F2_TEXT = """\
0 1 1 1 0.1
1 1 2 0 0.0
1 0.0
"""

F2_SYMS = """\
<eps> 0
go 1
<sil> 2
"""


@pytest.fixture
def f1():
    return parse_text_fst(F1_TEXT)


@pytest.fixture
def f1_csr(f1):
    return build_csr(f1)


@pytest.fixture
def f1_symtab():
    return parse_symbol_table(F1_SYMS)


@pytest.fixture
def f2():
    return parse_text_fst(F2_TEXT)


@pytest.fixture
def f2_csr(f2):
    return build_csr(f2)


@pytest.fixture
def f1_scores_easy():
    # frame 1 favors alpha, frame 2 favors bravo: best path alpha-bravo at 0.8
    return ScoreMatrix(costs=np.array([[0.0, 5.0, 5.0], [5.0, 0.0, 5.0]]))


@pytest.fixture
def f1_scores_margin():
    # unbiased decode prefers charlie-bravo (1.6) over alpha-bravo (1.8)
    return ScoreMatrix(costs=np.array([[1.0, 5.0, 0.0], [5.0, 0.0, 5.0]]))


def decode_final(csr, scores, ctx=None, cfg=None, channel_id="t"):
    """Advance every frame of one utterance and finalize."""
    cfg = cfg or DecoderConfig()
    ch = init_channel(channel_id, None, None, cfg)
    for t in range(scores.num_frames):
        advance_frame(ch, scores.row(t), csr, ctx, cfg)
    return finalize(ch, csr)
