"""boweldet: two-stage CNN detection of short bowel-sound bursts in
abdominal audio recordings."""

__version__ = "0.1.0"
