"""daycycle: analysis of 24-hour activity-cycle compositions.

Three complementary pipelines over person-level time-use data:

- isotemporal substitution models (``daycycle.ism``),
- compositional regression on log-ratio coordinates (``daycycle.coda``),
- latent profile analysis with misclassification-corrected step-3 inference
  (``daycycle.lpa``, ``daycycle.step3``),

plus simplex algebra (``daycycle.composition``), a shared linear-model engine
(``daycycle.linmod``), ingestion/simulation (``daycycle.ingest``,
``daycycle.simulate``), and a CLI (``daycycle.cli``).
"""

__version__ = "0.1.0"
