"""Which transmitter layouts can carry a two-photon image at all.

The image has to be larger than the diffraction blur of the full source
pair, smaller than what a single narrow beam can resolve, and larger than
one wavelength so it survives propagation.  This script checks three
layouts and prints the margins of each condition.
"""

from qdirsim.geometry import SystemGeometry, check_feasibility


def main():
    layouts = {
        "protocol layout": SystemGeometry.from_angles(0.1, 1e-3, 4.0),
        "image below a wavelength": SystemGeometry.from_angles(0.1, 1e-3, 0.5),
        "sources too close together": SystemGeometry.from_angles(0.01, 1e-3, 4.0),
    }
    for label, geometry in layouts.items():
        v = check_feasibility(geometry)
        print(f"{label:28s} feasible={v.feasible!s:5s} "
              f"lower={v.margin_lower:7.3f} upper={v.margin_upper:7.3f} "
              f"propagation={v.margin_propagation:5.2f}")


if __name__ == "__main__":
    main()
