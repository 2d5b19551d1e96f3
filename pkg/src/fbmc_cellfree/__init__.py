"""Link-level simulation toolkit for downlink cell-free DM-MIMO FBMC/OQAM
with asynchronous reception.

Subpackages cover deployment geometry, multipath channel modelling,
the FBMC/OQAM filter bank, multi-tap precoding with phase compensation,
Monte Carlo link metrics, closed-form ergodic rate evaluation, a CP-OFDM
baseline and an experiment harness with CSV/figure reporting.
"""

__version__ = "0.1.0"
