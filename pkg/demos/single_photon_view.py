"""What one photon on its own reveals.

For the exact difference kernel every photon's angular distribution is flat:
a detector that looks at photons one at a time learns nothing about where
they came from.  Measuring one photon does pin down its partner, though,
which is what a coincidence receiver exploits.
"""

import numpy as np

from qdirsim.state import (
    ImageSpec,
    TransverseGrid,
    conditional,
    make_difference_correlated_state,
    marginal,
)


def main():
    grid = TransverseGrid()
    state = make_difference_correlated_state(grid, None, ImageSpec())
    m = marginal(state, "signal")
    flat = 1 / (2 * grid.q_max)
    print(f"largest departure of the single-photon marginal from flat: "
          f"{np.max(np.abs(m - flat)):.2e} (flat density {flat:.4f})")
    for q in (-6.0, 0.0, 4.5):
        c = conditional(state, q)
        print(f"signal measured at q={q:+.2f}: idler peaks at q={grid.q[np.argmax(c)]:+.2f}")


if __name__ == "__main__":
    main()
