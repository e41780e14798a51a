from collections import OrderedDict
from functools import partial

import numpy as np
from tabulate import tabulate

from squaremamba.console_utils import TQDM_BAR_FORMAT, tqdm, warning
from squaremamba.core.window import Window


def progress(name, x, **kwargs):
    return tqdm(x, desc=name, unit="windows", bar_format=TQDM_BAR_FORMAT, **kwargs)


class Sequence:
    def __init__(self, blocks, name=None):
        """A sequence of :py:class:`Block` objects to sequentially process windows

        Parameters
        ----------
        blocks : list
            list of :py:class:`Block` objects
        name : str, optional
            name of the sequence, by default None
        """
        self.name = name
        self.windows = []
        self.blocks_dict = None
        self.blocks = blocks
        self.discards = {}
        self.n_processed_windows = None

    def __getattr__(self, item):
        if item == "blocks_dict" or self.__dict__.get("blocks_dict") is None:
            raise AttributeError(item)
        try:
            return self.blocks_dict[item]
        except KeyError:
            raise AttributeError(item)

    @property
    def blocks(self):
        """list of :py:class:`Block` objects"""
        return list(self.blocks_dict.values())

    @blocks.setter
    def blocks(self, blocks):
        self.blocks_dict = OrderedDict(
            {
                block.name if block.name is not None else "block{}".format(i): block
                for i, block in enumerate(blocks)
            }
        )

    def _set_blocks_in_sequence(self, in_sequence):
        for b in self.blocks:
            b.in_sequence = in_sequence

    def run(self, windows, terminate=True, show_progress=True):
        """Run the sequence

        Parameters
        ----------
        windows : list or :py:class:`Window`
            windows to be processed by the sequence
        terminate : bool, optional
            whether to run :py:class:`Sequence.terminate` at the end of the sequence, by default True
        show_progress : bool, optional
            whether to show a progress bar, by default True

        Returns
        -------
        list
            windows that were not discarded, in input order
        """
        self._set_blocks_in_sequence(True)
        self.windows = [windows] if isinstance(windows, Window) else list(windows)

        if not show_progress:

            def _p(x, **kwargs):
                return x

            self.progress = _p
        else:
            self.progress = partial(progress, self.name)

        self.n_processed_windows = 0
        self.discards = {}
        self._run()

        for block_name, reasons in self.discards.items():
            total = sum(reasons.values())
            details = ", ".join(f"{reason} ({n})" for reason, n in reasons.items())
            warning(
                f"{block_name} discarded {total} window{'s' if total > 1 else ''}: {details}"
            )

        if terminate:
            self.terminate()

        return self.kept

    def _run(self):
        for window in self.progress(self.windows, total=len(self.windows)):
            for block in self.blocks:
                block._run(window)
                # any block can discard a window
                if window.discard:
                    self._add_discard(type(block).__name__, window.discard_reason)
                    break

            self.n_processed_windows += 1

    @property
    def kept(self):
        return [window for window in self.windows if not window.discard]

    def terminate(self):
        """Run the :py:class:`Block.terminate` method of all blocks"""
        for block in self.blocks:
            block._terminate()
        self._set_blocks_in_sequence(False)

    def _add_discard(self, discard_block, reason):
        reasons = self.discards.setdefault(discard_block, {})
        reason = reason or "unspecified"
        reasons[reason] = reasons.get(reason, 0) + 1

    def __str__(self):
        total = self.processing_time or 1.0
        rows = [
            [
                i,
                block.name,
                block.__class__.__name__,
                f"{block.processing_time:.3f} s ({(block.processing_time/total)*100:.0f}%)",
            ]
            for i, block in enumerate(self.blocks)
        ]
        headers = ["index", "name", "type", "processing"]

        return tabulate(rows, headers, tablefmt="fancy_grid")

    def __repr__(self) -> str:
        return self.__str__()

    @property
    def processing_time(self):
        """Total processing time of the sequence last run"""
        return np.sum([block.processing_time for block in self.blocks])

    def __getitem__(self, item):
        return self.blocks[item]
