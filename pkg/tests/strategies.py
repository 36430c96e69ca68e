"""Shared hypothesis strategies for stratified datasets."""

from hypothesis import strategies as st

from strata_rd.tables import StratifiedDataset

cell = st.integers(0, 12)
stratum_rows = st.tuples(cell, cell, cell, cell).filter(lambda c: sum(c) > 0)


def _has_included(rows):
    return any((c[0] + c[2]) > 0 and (c[1] + c[3]) > 0 for c in rows)


row_lists = st.lists(stratum_rows, min_size=1, max_size=10).filter(_has_included)
datasets = row_lists.map(StratifiedDataset.from_counts)

# every stratum has both arms
full_rows = st.tuples(cell, cell, cell, cell).filter(lambda c: c[0] + c[2] > 0 and c[1] + c[3] > 0)
full_datasets = st.lists(full_rows, min_size=1, max_size=10).map(StratifiedDataset.from_counts)
