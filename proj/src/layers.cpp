#include "msfnet/layers.hpp"

namespace msfnet {

void xavier_init(torch::nn::Module& module) {
    torch::NoGradGuard no_grad;
    for (auto& child : module.modules(/*include_self=*/false)) {
        if (auto* conv = child->as<torch::nn::Conv2d>()) {
            torch::nn::init::xavier_uniform_(conv->weight);
            if (conv->bias.defined()) {
                conv->bias.zero_();
            }
        }
    }
}

} // namespace msfnet
