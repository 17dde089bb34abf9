from typing import Literal

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
BoolArray = npt.NDArray[np.bool_]

FadingMode = Literal["expected-fading", "mean-fading"]
"""How interferer Rayleigh fading enters the capture probability of the analytical model."""
