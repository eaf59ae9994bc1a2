#pragma once

#include "cm/model.hpp"

#include <Eigen/Dense>

namespace cmtest {

// Straight-line re-implementation of the network with plain loops, written
// only from the layer definitions. Used as an independent oracle for the
// tape-based forward pass.

Eigen::MatrixXd ref_mamba_block(const Eigen::MatrixXd& x, const cm::ssm::MambaBlockParams& p);

Eigen::MatrixXd ref_cmblock(const Eigen::MatrixXd& x, const cm::model::CmBlockParams& p,
                            bool residual);

double ref_forward(const cm::model::CryptoMamba& model, const Eigen::MatrixXd& window);

}  // namespace cmtest
