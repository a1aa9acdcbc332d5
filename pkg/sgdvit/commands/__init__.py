from .command import BaseCommand
from .synth import *
from .tracking import *
from .training import *
from .evaluation import *
