#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tra/tensor.hpp"

namespace tra {

// Tape of recorded primitive applications. Ops append during the forward
// pass; backward() seeds d(loss)=1 and replays the tape in reverse, visiting
// each node exactly once. Recording order is construction order, so the
// topological invariant (inputs precede consumers) holds for free.
template <class T>
class Graph {
public:
    struct Node {
        const char* op;
        std::vector<std::int64_t> input_ids;
        std::int64_t output_id;
        Tensor<T> output;
        std::function<void()> backward;
    };

    void record(const char* op, const std::vector<Tensor<T>>& inputs, Tensor<T> output,
                std::function<void()> backward) {
        Node n;
        n.op = op;
        n.input_ids.reserve(inputs.size());
        for (const auto& in : inputs) {
            if (in.defined()) n.input_ids.push_back(in.id()); // optional inputs may be absent
        }
        n.output_id = output.id();
        n.output = std::move(output);
        n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
    }

    std::size_t num_nodes() const { return nodes_.size(); }
    const Node& node(std::size_t i) const { return nodes_[i]; }

    void clear() { nodes_.clear(); }

    // Populates grads of everything the loss depends on. The loss must be a
    // scalar produced by an op recorded on this tape.
    void backward(Tensor<T> loss) {
        require<ShapeError>(loss.size() == 1, "backward() needs a scalar loss, got ",
                            shape_str(loss.shape()));
        bool found = false;
        for (const auto& n : nodes_) {
            if (n.output.same_storage(loss)) {
                found = true;
                break;
            }
        }
        require<ShapeError>(found, "loss tensor was not produced on this graph");
        loss.grad()[0] += T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            // Nodes whose output never received a gradient cannot contribute.
            if (!it->output.has_grad()) continue;
            it->backward();
        }
    }

private:
    std::vector<Node> nodes_;
};

} // namespace tra
