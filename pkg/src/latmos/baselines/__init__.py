from .alergia import (AlergiaClassifier, FreqPrefixTree, StochasticAutomaton, alergia_accepts,
                      alergia_learn, hoeffding_different)
from .spectral import (HANKEL_KINDS, SpectralClassifier, WeightedAutomaton, best_threshold,
                       hankel_basis, spectral_accepts, spectral_learn)
from .symbols import SymbolTable
