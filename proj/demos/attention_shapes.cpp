// Runs one untrained dual-view forward pass on a random pair of volumes and
// prints the stage shapes, parameter count and the resulting probability.

#include <iostream>

#include "hva/network.hpp"

int main() {
    using hva::Shape;
    hva::ModelConfig cfg;
    cfg.input_size = {32, 32, 32};
    cfg.stage_channels = {4, 8, 16, 32};
    cfg.seed = 1;

    auto model = hva::build<float>(cfg);
    std::cout << "parameters: " << model.params.size() << " tensors, " << model.params.total_elements()
              << " elements\n";

    hva::Rng rng(2);
    auto vt = hva::random_normal<float>({1, 1, 32, 32, 32}, rng);
    auto vs = hva::random_normal<float>({1, 1, 32, 32, 32}, rng);
    auto trace = hva::forward_trace(model, hva::make_constant(vt), hva::make_constant(vs));
    for (int i = 0; i < 4; ++i)
        std::cout << "stage " << i + 1 << " transverse " << hva::shape_str(trace.stage_t[i]->value.shape())
                  << "  sagittal " << hva::shape_str(trace.stage_s[i]->value.shape()) << '\n';
    std::cout << "probability: " << hva::predict_proba(model, vt, vs)[0] << '\n';
    return 0;
}
