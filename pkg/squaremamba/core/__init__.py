from .block import Block
from .sequence import Sequence
from .window import LAYOUT, TARGET, VARIABLES, Window, WindowLayout
