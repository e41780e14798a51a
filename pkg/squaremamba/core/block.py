import contextlib
from time import time

from squaremamba.console_utils import warning
from squaremamba.core.window import Window


@contextlib.contextmanager
def _exception_context(msg):
    try:
        yield
    except Exception as ex:
        if ex.args:
            msg = f"[{msg}] {ex.args[0]}"
        ex.args = (msg,) + ex.args[1:]
        raise


class Block(object):
    """Single unit of processing acting on a :py:class:`~squaremamba.Window`

    Reading, processing and writing :py:class:`~squaremamba.Window` attributes. When
    placed in a sequence, it goes through two steps:

        1. :py:meth:`~squaremamba.Block.run` on each window fed to the :py:class:`~squaremamba.Sequence`
        2. :py:meth:`~squaremamba.Block.terminate` called once the :py:class:`~squaremamba.Sequence` is done

    Parameters
    ----------
    name : str, optional
        name of the block, by default None
    read : list, optional
        window attributes required by the block, by default None

    All squaremamba blocks must be child of this parent class
    """

    def __init__(self, name=None, read=None):
        self.name = name
        self.processing_time = 0
        self.runs = 0
        self.in_sequence = False
        if read is not None:
            if not isinstance(read, list):
                raise TypeError("read must be a list")
            self.read = read
        else:
            self.read = []

    def _check_require(self, window):
        for _require in self.read:
            if not hasattr(window, _require) and _require not in window.computed:
                raise AttributeError(
                    f"[{self.__class__.__name__}] Window must have attribute '{_require}'"
                )

    def _run(self, window: Window):
        t0 = time()
        if not isinstance(window, Window):
            raise TypeError("block must be run on a Window")
        with _exception_context(self.__class__.__name__):
            self._check_require(window)
            self.run(window)
        self.processing_time += time() - t0
        self.runs += 1

    def run(self, window: Window):
        """Running on a window (must be overwritten when subclassed)

        Parameters
        ----------
        window : squaremamba.Window
            window to be processed
        """
        raise NotImplementedError()

    def terminate(self):
        """Method called after block's :py:class:`~squaremamba.Sequence` is finished (if any)"""
        pass

    def _terminate(self):
        with _exception_context(self.__class__.__name__):
            self.terminate()

    def __call__(self, window):
        window_copy = window.copy()
        self._run(window_copy)
        if window_copy.discard:
            warning(
                f"{self.__class__.__name__} discarded Window ({window_copy.discard_reason})"
            )
        return window_copy
