// Generates a handful of synthetic cases in memory and prints the sampled
// lesion geometry next to each label, showing what the task looks like.

#include <iostream>

#include "hva/synth.hpp"

int main() {
    hva::SynthParams sp;
    sp.size = 32;
    for (std::int64_t i = 0; i < 6; ++i) {
        const auto c = hva::synth_case<float>(11, i, sp);
        const auto& s = c.spec;
        std::cout << s.id << "  label=" << s.label << "  axis=" << (s.direction == 0 ? 'H' : 'D')
                  << "  elongation=" << s.elongation << "  semi_axes=(" << s.semi_axes[0] << ", "
                  << s.semi_axes[1] << ", " << s.semi_axes[2] << ")  contrast=" << s.contrast << '\n';
    }
    std::cout << "label rule: elongation > " << sp.tau << " along the sampled axis\n";
    return 0;
}
