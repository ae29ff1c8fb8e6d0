"""cubelink: a cubesat whose only link to the ground is audio.

Satellite flight software (state machine, sensor bus, camera) talks to a
ground station exclusively through audio-modulated radio: AFSK telemetry
frames down, Robot36 SSTV images down, DTMF command tones up.
"""

__version__ = "0.1.0"
