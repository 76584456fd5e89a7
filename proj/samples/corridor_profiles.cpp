// Prints exact optimality profiles of the two-arm world and the corridor
// under a few discounts, and the transport distance between them.

#include <cstdio>

#include "optprof/optprof.hpp"

using namespace optprof;

namespace {

void print_profile(const char* label, const OptimalityProfile& p) {
  std::printf("%s (%zu atoms, mean %.4f)\n", label, p.size(), p.mean());
  for (const auto& a : p.atoms()) std::printf("  %10.4f  %.6f\n", a.location, a.weight);
}

}  // namespace

int main() {
  const auto arms = envs::two_corridor();
  const auto arms_mdp = build_gridworld(arms);
  const auto arms_pi = envs::two_corridor_policy(arms);

  // The short arm is taken 80% of the time, but counted per visited state the
  // two arms carry equal mass.
  const auto rescaled = rescaled_traj_distribution(enumerate_trajectories(arms_mdp, arms_pi));
  for (const auto& t : rescaled) std::printf("arm of length %zu: mass %.3f\n", t.traj.length(), t.prob);
  print_profile("two arms, gamma 1", exact_return_distribution(arms_mdp, arms_pi, arms_mdp.gt_reward(), 1.0));

  const auto corridor = envs::figure1_corridor(5, 0.0);
  const auto mdp = build_gridworld(corridor);
  const auto pi = TabularPolicy::epsilon_greedy(value_iteration(mdp, mdp.gt_reward(), 0.99).policy.argmax_actions(),
                                 mdp.n_actions(), 0.2);
  const auto flat = exact_return_distribution(mdp, pi, mdp.gt_reward(), 0.0);
  const auto discounted = exact_return_distribution(mdp, pi, mdp.gt_reward(), 0.9);
  print_profile("corridor, gamma 0", flat);
  print_profile("corridor, gamma 0.9", discounted);
  std::printf("W1 between them: %.6f\n", wasserstein(flat, discounted, 1.0));
  return 0;
}
