#include "optideq/dataset.hpp"

namespace optideq {

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.x.resize(static_cast<Eigen::Index>(indices.size()), x.cols());
  out.y.reserve(indices.size());
  out.row_ids.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    out.x.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(i));
    out.y.push_back(y[i]);
    out.row_ids.push_back(row_ids[i]);
    if (!keys.empty()) out.keys.push_back(keys[i]);
  }
  out.provenance = provenance;
  return out;
}

}  // namespace optideq
