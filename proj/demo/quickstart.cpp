// Runs a short LIE experiment against plain averaging and FedGraM and prints
// the per-round accuracy of both.

#include <cstdio>

#include "fedgram/simulation.hpp"

int main() {
    fedgram::ExperimentConfig cfg;
    cfg.rounds = 30;
    cfg.attack.kind = fedgram::AttackKind::lie;

    cfg.defense.kind = fedgram::DefenseKind::fedavg;
    const auto plain = fedgram::run_experiment(cfg);
    cfg.defense.kind = fedgram::DefenseKind::fedgram;
    const auto robust = fedgram::run_experiment(cfg);

    std::printf("round  fedavg  fedgram  fedgram_recall\n");
    for (std::size_t i = 0; i < plain.size(); ++i) {
        std::printf("%5zu  %6.3f  %7.3f  %14.2f\n", plain[i].round, plain[i].test_accuracy, robust[i].test_accuracy,
                    robust[i].detect_recall.value_or(1.0));
    }
    std::printf("best   %6.3f  %7.3f\n", plain.back().best_accuracy, robust.back().best_accuracy);
}
