from .metrics import (effective_rate, genie_rate, per_ue_cdf, per_ue_rates, prob_rate_above,
                      sinr, sum_rate)

__all__ = ["effective_rate", "genie_rate", "per_ue_cdf", "per_ue_rates", "prob_rate_above",
           "sinr", "sum_rate"]
