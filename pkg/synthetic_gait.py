import numpy as np

from gait_errors import ConfigError
from skeleton_io import GaitDataset, Recording

FRAME_RATE = 30.0

# per-identity parameter ranges, spread evenly over the identities
STRIDE_RANGE = (0.3, 0.8)
FREQUENCY_RANGE = (0.8, 1.6)
HEIGHT_RANGE = (1.55, 1.95)
WIDTH_RANGE = (0.15, 0.3)

CONDITIONS = ('nm', 'bg', 'cl')
# bag carrying damps arm swing, clothing widens the torso
BAG_ARM_DAMPING = 0.3
CLOTHING_WIDTH = 1.25


class GaitParams:
    """GaitParams class

    Walking style of one synthetic identity.
    """

    def __init__(self, stride, frequency, phase, height=1.75, width=0.2):
        """Constructor

        :param float stride: Stride length (m), scales limb swing
        :param float frequency: Step frequency (Hz)
        :param float phase: Phase offset (rad)
        :param float height: Body height (m)
        :param float width: Shoulder/hip half-width (m)
        """
        self.stride = stride
        self.frequency = frequency
        self.phase = phase
        self.height = height
        self.width = width

    def as_tuple(self):
        return (self.stride, self.frequency, self.phase, self.height,
                self.width)

    def to_dict(self):
        return {
            'stride': self.stride,
            'frequency': self.frequency,
            'phase': self.phase,
            'height': self.height,
            'width': self.width
        }


def identity_params(identities, rng):
    """Draw distinct gait parameters for each identity.

    Strides, frequencies, heights and body widths are spread evenly over
    their ranges and shuffled independently, so no two identities share a
    tuple.

    :param int identities: Number of identities C
    :param Generator rng: Seeded generator
    """
    def spread(low, high):
        if identities == 1:
            values = np.array([(low + high) / 2.0])
        else:
            values = np.linspace(low, high, identities)
        return values[rng.permutation(identities)]

    strides = spread(*STRIDE_RANGE)
    frequencies = spread(*FREQUENCY_RANGE)
    heights = spread(*HEIGHT_RANGE)
    widths = spread(*WIDTH_RANGE)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=identities)
    return [
        GaitParams(float(strides[i]), float(frequencies[i]),
                   float(phases[i]), float(heights[i]), float(widths[i]))
        for i in range(identities)
    ]


def walk(params, num_frames, num_joints, phase_offset=0.0, condition=None):
    """Noiseless joint trajectories of one recording (T x J x 3).

    Joints alternate between the left and right side and are stacked from
    the feet (level 0) to the head (level 1). Lower joints swing forward and
    back like legs, upper joints swing in counter-phase like arms.

    :param GaitParams params: Gait parameters
    :param int num_frames: Frames T
    :param int num_joints: Joints J
    :param float phase_offset: Extra phase of this recording (rad)
    :param str condition: 'nm', 'bg', 'cl' or None
    """
    t = np.arange(num_frames)[:, None]
    omega = 2.0 * np.pi * params.frequency / FRAME_RATE
    level = np.arange(num_joints) / float(num_joints - 1)
    side = np.where(np.arange(num_joints) % 2 == 0, 1.0, -1.0)
    upper = level >= 0.5

    amplitude = np.where(upper, 0.5 * params.stride * level,
                         params.stride * (1.0 - level))
    if condition == 'bg':
        amplitude = np.where(upper, amplitude * BAG_ARM_DAMPING, amplitude)
    width = params.width
    if condition == 'cl':
        width *= CLOTHING_WIDTH

    angle = omega * t + params.phase + phase_offset
    # right side and arms run half a cycle behind
    limb_phase = np.pi * ((side < 0) ^ upper)

    frames = np.empty((num_frames, num_joints, 3))
    frames[:, :, 0] = (side * width * (0.5 + 0.5 * level)
                       + 0.01 * np.sin(angle))
    frames[:, :, 1] = (params.height * (0.1 + 0.9 * level)
                       + 0.02 * params.stride * np.sin(angle) ** 2)
    frames[:, :, 2] = amplitude * np.sin(angle + limb_phase)
    return frames


def generate_synthetic(identities, recordings_per_identity,
                       frames_per_recording, num_joints=10, noise=0.01,
                       seed=0, gait_params=None, conditions=None):
    """Generate a deterministic dataset of sinusoidal walkers.

    Each identity has its own stride, frequency, phase, height and body
    width. Every
    recording starts at a random phase and gets Gaussian noise of standard
    deviation ``noise``. With three or more recordings the second to last
    one is the test gallery and the last one the test probe; with two, the
    first is a training gallery and the second the probe.

    Extra ``conditions`` (e.g. ['bg', 'cl']) add one probe recording per
    identity and condition for condition-based matching.

    :param int identities: Number of identities C
    :param int recordings_per_identity: Normal-walk recordings per identity
    :param int frames_per_recording: Frames T per recording
    :param int num_joints: Joints J
    :param float noise: Noise standard deviation (m)
    :param int seed: Random seed
    :param list gait_params: Optional GaitParams (or dicts) per identity
    :param list conditions: Optional extra probe conditions
    """
    if identities < 1:
        raise ConfigError("identities must be >= 1, got %s" % identities)
    if recordings_per_identity < 1:
        raise ConfigError("recordings per identity must be >= 1, got %s" %
                          recordings_per_identity)
    if frames_per_recording < 1:
        raise ConfigError("frames per recording must be >= 1, got %s" %
                          frames_per_recording)
    if num_joints < 2:
        raise ConfigError("num_joints must be >= 2, got %s" % num_joints)
    if noise < 0:
        raise ConfigError("noise must be >= 0, got %s" % noise)
    conditions = list(conditions or [])
    for condition in conditions:
        if condition not in CONDITIONS or condition == 'nm':
            raise ConfigError(
                "Unknown probe condition '%s' (use 'bg' or 'cl')" % condition
            )

    rng = np.random.default_rng(seed)
    if gait_params is None:
        gait_params = identity_params(identities, rng)
    else:
        gait_params = [
            p if isinstance(p, GaitParams) else GaitParams(**p)
            for p in gait_params
        ]
        if len(gait_params) != identities:
            raise ConfigError(
                "%d gait parameter sets given for %d identities" %
                (len(gait_params), identities)
            )
        if len(set(p.as_tuple() for p in gait_params)) != identities:
            raise ConfigError("Identities must have distinct gait parameters")

    layout = recording_layout(recordings_per_identity)
    layout += [('test', 'probe', condition) for condition in conditions]

    recordings = []
    for i, params in enumerate(gait_params):
        for rec, (split, role, condition) in enumerate(layout):
            phase_offset = rng.uniform(0.0, 2.0 * np.pi)
            frames = walk(params, frames_per_recording, num_joints,
                          phase_offset, condition)
            if noise > 0:
                frames = frames + rng.normal(0.0, noise, size=frames.shape)
            recordings.append(Recording(
                i + 1, rec, frames, split, role, condition
            ))

    return GaitDataset(num_joints, recordings)


def recording_layout(count):
    """Return (split, role, condition) per normal-walk recording."""
    if count == 1:
        return [('train', None, 'nm')]
    if count == 2:
        return [('train', 'gallery', 'nm'), ('test', 'probe', 'nm')]
    layout = [('train', None, 'nm')] * (count - 2)
    return layout + [('test', 'gallery', 'nm'), ('test', 'probe', 'nm')]
