from .model import *
from .loss import *
from .optim import *
from .metrics import *
from .train import *
from .evaluate import *
