#pragma once

#include <vector>

#include "milgan/modality.hpp"
#include "milgan/seqdata.hpp"
#include "milgan/tensor.hpp"

namespace milgan {

/// Frobenius cosine <A,B>_F / (|A|_F |B|_F). Zero-norm operands contribute 0
/// (a degenerate sequence carries no direction).
double frob_cosine(const Tensor& a, const Tensor& b);

/// Accumulated similarity: sum over all (reference, generated) pairs of the
/// Frobenius cosine of their channel matrices.
double sum_sim(const std::vector<Tensor>& reference, const std::vector<Tensor>& generated);
double sum_sim(const std::vector<ModalSequence>& reference,
               const std::vector<ModalSequence>& generated, Modality channel);

}  // namespace milgan
