speed_of_light = 299792458.0  # m/s
carrier_frequency = 3.5e9  # Hz, default sub-6GHz carrier
subcarrier_spacing = 30e3  # Hz
slot_duration = 0.5e-3  # s, one slot at 30 kHz numerology

# Maximum user speed per mobility class, m/s
mobility_speeds = {
    "static": 0.0,
    "pedestrian": 3.0 / 3.6,
    "vehicular": 60.0 / 3.6,
    "high-speed": 300.0 / 3.6,
}

rope_base = 10000.0
phase_epsilon = 1e-12  # unit-circle guard for zero-magnitude elements
tensor_magic = b"CHT1"
