# aggregation/binning.py

from typing import Dict, Tuple

BINS = ("first_subject", "middle_subject", "last_subject", "first_subsequent", "further", "last_token")


class BinningError(Exception):
    pass


def bin_positions(n_tokens: int, subject_span: Tuple[int, int]) -> Dict[int, str]:
    """
    Maps every position to one token bin. A one-token subject is only
    last_subject; last_token beats first_subsequent and further. Positions
    in front of the subject (external prompts only) count as further.
    """
    start, end = subject_span
    if end <= start:
        raise BinningError(f"empty subject span {subject_span}")
    if start < 0 or end >= n_tokens:
        raise BinningError(f"subject span {subject_span} leaves no token after the subject in {n_tokens} tokens")

    bins: Dict[int, str] = {}
    for pos in range(n_tokens):
        if pos == n_tokens - 1:
            bins[pos] = "last_token"
        elif pos == end - 1:
            bins[pos] = "last_subject"
        elif pos == start:
            bins[pos] = "first_subject"
        elif start < pos < end - 1:
            bins[pos] = "middle_subject"
        elif pos == end:
            bins[pos] = "first_subsequent"
        else:
            bins[pos] = "further"
    return bins
