"""Reading the image and finding the transmitters exclude each other.

A wide-acceptance coincidence receiver sees the two-dot image with high
contrast.  A direction finder that records single photons gets no usable
fit for the source angles.  Narrowing the receiver's aperture to make it
directional wipes out the image.
"""

from qdirsim.errors import NonIdentifiableError
from qdirsim.measurement import MeasurementChannel, estimate_source_directions, sample_events
from qdirsim.metrics import state_contrast
from qdirsim.optics import TransferFunction
from qdirsim.scenario import Scenario, load


def main():
    sc = Scenario(load("default_protocol"))
    print(f"coincidence image contrast, open receiver: "
          f"{state_contrast(sc.channel.prepare(sc.state), sc.image):.4f}")
    singles = sample_events(sc.state, sc.single_photon_channel(), 10_000, 42)
    try:
        est = estimate_source_directions(singles, grid=sc.grid)
        print(f"direction estimate: {est.angles} +- {est.stderr}")
    except NonIdentifiableError as exc:
        print(f"direction estimate: {exc}")
    for cutoff in (2.0, 0.5, 0.1):
        chain = (TransferFunction("hard_aperture", arm="signal", cutoff=cutoff),)
        narrowed = MeasurementChannel(chain=chain).prepare(sc.state)
        print(f"contrast with aperture cutoff {cutoff:4.2f}: "
              f"{state_contrast(narrowed, sc.image):.4f}")

    control = Scenario(load("control_narrowbeams"))
    beams = sample_events(control.state, control.single_photon_channel(), 10_000, 42)
    est = estimate_source_directions(beams, grid=control.grid, n_boot=50)
    angles = ", ".join(f"{a:+.4f}" for a in est.angles)
    print(f"ordinary narrow beams, direction estimate: {angles} "
          f"(true +-{control.geometry.opening_angle_full / 2})")


if __name__ == "__main__":
    main()
