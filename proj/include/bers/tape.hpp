#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "bers/numerics.hpp"

namespace bers {

/// Reverse-mode differentiation tape over dense matrices.
///
/// Nodes are appended in evaluation order, so the node index is already a
/// topological order and the backward sweep is a single reverse scan. A tape
/// belongs to one thread while recording or differentiating.
class Tape {
public:
    using Node = std::size_t;

    /// Forward rule of a custom node: input values to output value.
    using CustomForward = std::function<Matrix(std::span<const Matrix* const>)>;
    /// Backward rule: (input values, output value, output adjoint) to one
    /// adjoint contribution per input, each shaped like that input.
    using CustomBackward = std::function<std::vector<Matrix>(
        std::span<const Matrix* const>, const Matrix&, const Matrix&)>;

    Node constant(Matrix value);
    /// Leaf whose gradient is reported by gradient(); registration order is
    /// the order of the returned gradients.
    Node parameter(Matrix value);

    /// Element-wise sum. `b` may also be a 1 x cols row broadcast over the rows of `a`.
    Node add(Node a, Node b);
    /// Element-wise product. Either side may be 1 x 1 (scalar broadcast).
    Node multiply(Node a, Node b);
    Node matmul(Node a, Node b);
    Node tanh(Node a);
    Node relu(Node a);
    Node log(Node a);
    Node square(Node a);
    /// Sum of all entries as a 1 x 1 node.
    Node sum(Node a);
    /// Appends a column of ones (the bias feature).
    Node append_ones(Node a);
    Node custom(std::vector<Node> inputs, CustomForward forward, CustomBackward backward);

    const Matrix& value(Node n) const;
    /// Overwrites a leaf value; call replay() to propagate.
    void set_value(Node leaf, Matrix value);
    /// Recomputes every non-leaf node from the current leaf values.
    void replay();

    /// d(output)/d(parameter) for every registered parameter.
    /// Throws NonScalarOutput unless `output` is 1 x 1.
    std::vector<Matrix> gradient(Node output) const;

    std::size_t size() const { return nodes_.size(); }
    const std::vector<Node>& parameters() const { return parameters_; }

private:
    enum class Op { constant, parameter, add, add_row, multiply, scale_left, scale_right,
                    matmul, tanh, relu, log, square, sum, append_ones, custom };

    struct Record {
        Op op;
        std::vector<Node> inputs;
        Matrix value;
        std::size_t custom_index = 0;
    };

    struct CustomRule {
        CustomForward forward;
        CustomBackward backward;
    };

    Node push(Op op, std::vector<Node> inputs, Matrix value, std::size_t custom_index = 0);
    Matrix evaluate(const Record& r) const;
    void check(Node n) const;

    std::vector<Record> nodes_;
    std::vector<CustomRule> custom_rules_;
    std::vector<Node> parameters_;
};

}  // namespace bers
