"""Detection of Wi-Fi stations that shrink their minimum contention window.

Subsystems:

* :mod:`cwelab.markov`    -- DCF fixed points and nominal backoff PMFs
* :mod:`cwelab.estimator` -- empirical PMFs, Jensen-Shannon divergence, CWmin estimates
* :mod:`cwelab.sim`       -- discrete-event 802.11 DCF simulator
* :mod:`cwelab.tracker`   -- AP-side backoff recovery from observation logs
* :mod:`cwelab.cit`       -- preamble correlation bank for collision identification
* :mod:`cwelab.harness`   -- batch experiments and the ``cwelab`` CLI
"""

__version__ = "0.1.0"
