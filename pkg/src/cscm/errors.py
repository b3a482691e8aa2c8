"""Exception types raised by the estimators and the command line tool."""


class CSCMError(Exception):
    """Base class for domain errors (mapped to exit code 1 by the CLI)."""

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self)}


class SupportError(CSCMError, ValueError):
    """An observation lies outside the support rectangle."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index

    def to_dict(self):
        d = super().to_dict()
        d["index"] = self.index
        return d


class EmptyCellError(CSCMError):
    """Some histogram cell is empty, so the maximizer need not be unique.

    ``cells`` holds 1-based labels: ``("line", i)`` for the z = 0 cell of
    time interval i and ``("plane", i, j)`` for interior cells. Coarsening
    the grid is the usual remedy.
    """

    def __init__(self, cells):
        self.cells = list(cells)
        shown = ", ".join(_fmt_cell(c) for c in self.cells[:10])
        more = "" if len(self.cells) <= 10 else f" (+{len(self.cells) - 10} more)"
        super().__init__(
            f"{len(self.cells)} empty histogram cell(s): {shown}{more}; "
            "the smoothed likelihood has no unique maximizer, coarsen the grid"
        )

    def to_dict(self):
        d = super().to_dict()
        d["cells"] = [list(c) for c in self.cells]
        return d


class UndefinedNodeError(CSCMError):
    """A grid plug-in node needed for interpolation has an empty window."""

    def __init__(self, nodes):
        self.nodes = list(nodes)
        super().__init__(f"plug-in estimator undefined at grid node(s) {self.nodes}")

    def to_dict(self):
        d = super().to_dict()
        d["nodes"] = [list(n) for n in self.nodes]
        return d


class ZeroDenominatorError(CSCMError):
    """No observation falls inside the kernel window."""


def _fmt_cell(c):
    if c[0] == "line":
        return f"line[{c[1]}]"
    return f"cell[{c[1]},{c[2]}]"
