// Learns the arithmetic task with TIHT, refines with Adam and reports test MSE.

#include "tt2rnn/tt2rnn.hpp"

#include <iostream>

int main() {
  using namespace tt2rnn;

  TaskOptions opts;
  opts.N = 1000;
  opts.sigma2 = 0.1;
  opts.seed = 1;
  const SyntheticTask task = gen_arithmetic_task(opts);

  RecoveryConfig cfg;
  cfg.method = RecoveryMethod::TIHT;
  cfg.rank = 2;
  const SpectralResult res = spectral_learn(task.d_l, task.d_2l, task.d_2l1, cfg);
  for (const auto& w : res.diagnostics.warnings) std::cerr << "warning: " << w << '\n';

  std::cout << "spectral (tiht, R=2): test MSE " << mse(res.model, task.test) << '\n';

  RefineConfig rc;
  rc.epochs = 20;
  const RefineResult refined = sgd_refine(res.model, task.pooled_training(), rc);
  std::cout << "after Adam refinement: test MSE " << mse(refined.model, task.test)
            << " (training loss " << refined.initial_loss << " -> " << refined.best_loss << ")\n";

  std::cout << "f(x) on x = [(1,2,1), (0,-1,1)]: "
            << rnn_evaluate(refined.model, std::vector<Vector>{Vector{{1.0, 2.0, 1.0}},
                                                               Vector{{0.0, -1.0, 1.0}}})
            << " (exact: 0)\n";
  return 0;
}
