#include <algorithm>
#include <cmath>

#include "gnnforge/dist.hpp"

namespace gnnforge {

void CostModelParams::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0) || !(eta_flops > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta) ||
      !std::isfinite(eta_flops))
    throw std::invalid_argument("cost model parameters must be positive and finite");
}

CostPrediction predict_epoch_time(const PartitionStats& stats, const CostModelParams& cost, std::size_t features,
                                  std::size_t param_count, std::size_t ranks) {
  cost.validate();
  if (stats.degree_loads.size() != ranks || stats.vertex_counts.size() != ranks || stats.halo.size() != ranks)
    throw DimensionError("partition stats do not match the rank count");
  constexpr double kBytes = 4.0;
  const double f = static_cast<double>(features);
  const double p = static_cast<double>(ranks);
  CostPrediction out;
  out.comp.resize(ranks);
  out.halo.resize(ranks);
  out.total.resize(ranks);
  out.grad = ranks <= 1 ? 0.0
                        : 2.0 * (p - 1.0) * cost.alpha +
                              2.0 * ((p - 1.0) / p) * cost.beta * static_cast<double>(param_count) * kBytes;
  for (std::size_t r = 0; r < ranks; ++r) {
    // degree_loads counts deg(v) + 1 per node.
    const double degree_sum = static_cast<double>(stats.degree_loads[r] - stats.vertex_counts[r]);
    out.comp[r] = degree_sum * f / cost.eta_flops;
    double halo = 0.0;
    for (std::size_t q = 0; q < ranks; ++q)
      if (q != r && stats.halo[r][q] > 0)
        halo += cost.alpha + cost.beta * static_cast<double>(stats.halo[r][q]) * f * kBytes;
    out.halo[r] = halo;
    out.total[r] = out.comp[r] + out.halo[r] + out.grad;
  }
  out.epoch = out.total.empty() ? 0.0 : *std::max_element(out.total.begin(), out.total.end());
  return out;
}

}  // namespace gnnforge
