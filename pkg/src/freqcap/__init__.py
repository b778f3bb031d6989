"""freqcap: attentional seq2seq generation with per-word frequency budgets.

An encoder-decoder with a word-frequency estimation head; beam-search
decoding can cap each vocabulary word's output count at the estimate.
"""

__version__ = "0.1.0"
