#pragma once

#include <string>

#include <Eigen/Core>

namespace diffce {

struct IdxDataset {
  Eigen::MatrixXd images;  // pixels scaled to [0, 1]; columns are examples
  Eigen::VectorXi labels;
  int rows = 0;
  int cols = 0;
};

// Reads the big-endian IDX pair (images magic 0x00000803, labels magic
// 0x00000801).  Malformed input raises std::runtime_error naming the file
// and byte offset.
IdxDataset load_idx(const std::string& images_path,
                    const std::string& labels_path);

}  // namespace diffce
