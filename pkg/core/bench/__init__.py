from .latency import *
