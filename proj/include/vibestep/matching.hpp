#ifndef VIBESTEP_MATCHING_HPP
#define VIBESTEP_MATCHING_HPP

#include "vibestep/core.hpp"

#include <vector>

namespace vibestep {

// Maximum-weight assignment of rows to columns of a (possibly rectangular)
// weight matrix. result[r] is the column matched to row r, or -1 when the row
// is left unmatched because there are more rows than columns.
std::vector<int> max_weight_matching(const MatrixXd& weights);

}  // namespace vibestep

#endif  // VIBESTEP_MATCHING_HPP
