from .angles import TWO_PI, angle_difference, to_unit_interval, winding_number, wrap_angle, wrap_scalar
from .parallel import SUBSTREAM_SCHEME, ordered_map, substream
