#pragma once

#include <Eigen/Dense>
#include <vector>

#include "orchestra/dataset.hpp"
#include "orchestra/tiny_model.hpp"

namespace orchestra {

struct CentralRoundResult {
    std::vector<DistillResult> per_agent;
    double payload_kb = 0.0;  // broadcast payload per agent
};

// Per prompt-position mean of the agents' post-softmax token
// distributions. Returned as one (prompt_len x vocab) matrix per prompt.
std::vector<Eigen::MatrixXd> ensemble_distribution(const std::vector<TinyAgentModel>& agents,
                                                   const TransferSet& xfer);

// Central-KD: all agents submit their transfer-set distributions, the
// server averages them in probability space, and every agent distills
// toward the ensemble argmax sequence mixed with its local loss.
CentralRoundResult central_kd_round(std::vector<TinyAgentModel>& agents, const TransferSet& xfer,
                                    const std::vector<AgentDataset>& datasets,
                                    const DistillationConfig& cfg, int epochs);

struct FedIdRoundResult {
    std::vector<DistillResult> per_agent;
    TrainResult server_train;
    double payload_kb = 0.0;
};

// FedID-style round: confidence-weighted majority voting over the agents'
// greedy sequences trains the server, which then teaches every agent via
// text-level distillation.
FedIdRoundResult fedid_round(std::vector<TinyAgentModel>& agents, TinyAgentModel& server,
                             const TransferSet& xfer, const std::vector<AgentDataset>& datasets,
                             const DistillationConfig& cfg, int epochs);

// Winning sequence per prompt under confidence-weighted voting; exposed
// for direct testing. Weight ties resolve toward the sequence voted by
// the lowest agent id.
std::vector<std::vector<int>> vote_sequences(const std::vector<TinyAgentModel>& agents,
                                             const TransferSet& xfer);

// Mean over unordered agent pairs and prompt positions of the base-2 JS
// divergence between the agents' output distributions on the transfer set.
double mean_pairwise_output_js(const std::vector<TinyAgentModel>& agents, const TransferSet& xfer);

}  // namespace orchestra
