"""Grid-level estimation of recurrence sets (CR, strong chain recurrence,
Mane set, generalized recurrence) for continuous maps on compact metric
spaces."""

__version__ = "0.1.0"
