#include "bers/tape.hpp"

#include <cmath>
#include <string>

namespace bers {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionMismatch(std::string(op) + ": shape mismatch");
    }
}

}  // namespace

void Tape::check(Node n) const {
    if (n >= nodes_.size()) {
        throw std::out_of_range("tape node " + std::to_string(n) + " does not exist");
    }
}

Tape::Node Tape::push(Op op, std::vector<Node> inputs, Matrix value, std::size_t custom_index) {
    nodes_.push_back(Record{op, std::move(inputs), std::move(value), custom_index});
    return nodes_.size() - 1;
}

Tape::Node Tape::constant(Matrix value) { return push(Op::constant, {}, std::move(value)); }

Tape::Node Tape::parameter(Matrix value) {
    const Node n = push(Op::parameter, {}, std::move(value));
    parameters_.push_back(n);
    return n;
}

Tape::Node Tape::add(Node a, Node b) {
    check(a);
    check(b);
    const Matrix& va = nodes_[a].value;
    const Matrix& vb = nodes_[b].value;
    if (vb.rows() == 1 && va.rows() != 1 && vb.cols() == va.cols()) {
        Record r{Op::add_row, {a, b}, {}, 0};
        return push(Op::add_row, {a, b}, evaluate(r));
    }
    require_same_shape(va, vb, "add");
    return push(Op::add, {a, b}, va + vb);
}

Tape::Node Tape::multiply(Node a, Node b) {
    check(a);
    check(b);
    const Matrix& va = nodes_[a].value;
    const Matrix& vb = nodes_[b].value;
    if (va.size() == 1 && vb.size() != 1) {
        return push(Op::scale_left, {a, b}, va(0, 0) * vb);
    }
    if (vb.size() == 1 && va.size() != 1) {
        return push(Op::scale_right, {a, b}, vb(0, 0) * va);
    }
    require_same_shape(va, vb, "multiply");
    return push(Op::multiply, {a, b}, va.cwiseProduct(vb));
}

Tape::Node Tape::matmul(Node a, Node b) {
    check(a);
    check(b);
    if (nodes_[a].value.cols() != nodes_[b].value.rows()) {
        throw DimensionMismatch("matmul: inner dimensions differ");
    }
    return push(Op::matmul, {a, b}, nodes_[a].value * nodes_[b].value);
}

Tape::Node Tape::tanh(Node a) {
    check(a);
    return push(Op::tanh, {a}, nodes_[a].value.array().tanh().matrix());
}

Tape::Node Tape::relu(Node a) {
    check(a);
    return push(Op::relu, {a}, nodes_[a].value.cwiseMax(0.0));
}

Tape::Node Tape::log(Node a) {
    check(a);
    return push(Op::log, {a}, nodes_[a].value.array().log().matrix());
}

Tape::Node Tape::square(Node a) {
    check(a);
    return push(Op::square, {a}, nodes_[a].value.array().square().matrix());
}

Tape::Node Tape::sum(Node a) {
    check(a);
    Matrix v(1, 1);
    v(0, 0) = nodes_[a].value.sum();
    return push(Op::sum, {a}, std::move(v));
}

Tape::Node Tape::append_ones(Node a) {
    check(a);
    const Matrix& va = nodes_[a].value;
    Matrix v(va.rows(), va.cols() + 1);
    v.leftCols(va.cols()) = va;
    v.col(va.cols()).setOnes();
    return push(Op::append_ones, {a}, std::move(v));
}

Tape::Node Tape::custom(std::vector<Node> inputs, CustomForward forward, CustomBackward backward) {
    for (Node n : inputs) {
        check(n);
    }
    custom_rules_.push_back(CustomRule{std::move(forward), std::move(backward)});
    Record r{Op::custom, inputs, {}, custom_rules_.size() - 1};
    Matrix v = evaluate(r);
    return push(Op::custom, std::move(inputs), std::move(v), custom_rules_.size() - 1);
}

const Matrix& Tape::value(Node n) const {
    check(n);
    return nodes_[n].value;
}

void Tape::set_value(Node leaf, Matrix value) {
    check(leaf);
    Record& r = nodes_[leaf];
    if (r.op != Op::constant && r.op != Op::parameter) {
        throw std::invalid_argument("set_value applies to leaf nodes only");
    }
    require_same_shape(r.value, value, "set_value");
    r.value = std::move(value);
}

Matrix Tape::evaluate(const Record& r) const {
    auto in = [&](std::size_t k) -> const Matrix& { return nodes_[r.inputs[k]].value; };
    switch (r.op) {
        case Op::constant:
        case Op::parameter:
            return r.value;
        case Op::add:
            return in(0) + in(1);
        case Op::add_row:
            return in(0).rowwise() + in(1).row(0);
        case Op::multiply:
            return in(0).cwiseProduct(in(1));
        case Op::scale_left:
            return in(0)(0, 0) * in(1);
        case Op::scale_right:
            return in(1)(0, 0) * in(0);
        case Op::matmul:
            return in(0) * in(1);
        case Op::tanh:
            return in(0).array().tanh().matrix();
        case Op::relu:
            return in(0).cwiseMax(0.0);
        case Op::log:
            return in(0).array().log().matrix();
        case Op::square:
            return in(0).array().square().matrix();
        case Op::sum: {
            Matrix v(1, 1);
            v(0, 0) = in(0).sum();
            return v;
        }
        case Op::append_ones: {
            Matrix v(in(0).rows(), in(0).cols() + 1);
            v.leftCols(in(0).cols()) = in(0);
            v.col(in(0).cols()).setOnes();
            return v;
        }
        case Op::custom: {
            std::vector<const Matrix*> args;
            args.reserve(r.inputs.size());
            for (Node n : r.inputs) {
                args.push_back(&nodes_[n].value);
            }
            return custom_rules_[r.custom_index].forward(args);
        }
    }
    throw std::logic_error("unknown tape op");
}

void Tape::replay() {
    for (Record& r : nodes_) {
        if (r.op != Op::constant && r.op != Op::parameter) {
            r.value = evaluate(r);
        }
    }
}

std::vector<Matrix> Tape::gradient(Node output) const {
    check(output);
    if (nodes_[output].value.size() != 1) {
        throw NonScalarOutput("gradient requires a 1 x 1 output node");
    }
    std::vector<Matrix> adj(output + 1);
    std::vector<bool> touched(output + 1, false);
    adj[output] = Matrix::Ones(1, 1);
    touched[output] = true;

    auto accumulate = [&](Node n, const Matrix& contribution) {
        if (!touched[n]) {
            adj[n] = contribution;
            touched[n] = true;
        } else {
            adj[n] += contribution;
        }
    };

    for (Node i = output + 1; i-- > 0;) {
        if (!touched[i]) {
            continue;
        }
        const Record& r = nodes_[i];
        const Matrix& g = adj[i];
        auto in = [&](std::size_t k) -> const Matrix& { return nodes_[r.inputs[k]].value; };
        switch (r.op) {
            case Op::constant:
            case Op::parameter:
                break;
            case Op::add:
                accumulate(r.inputs[0], g);
                accumulate(r.inputs[1], g);
                break;
            case Op::add_row:
                accumulate(r.inputs[0], g);
                accumulate(r.inputs[1], g.colwise().sum());
                break;
            case Op::multiply:
                accumulate(r.inputs[0], g.cwiseProduct(in(1)));
                accumulate(r.inputs[1], g.cwiseProduct(in(0)));
                break;
            case Op::scale_left: {
                Matrix s(1, 1);
                s(0, 0) = g.cwiseProduct(in(1)).sum();
                accumulate(r.inputs[0], s);
                accumulate(r.inputs[1], in(0)(0, 0) * g);
                break;
            }
            case Op::scale_right: {
                Matrix s(1, 1);
                s(0, 0) = g.cwiseProduct(in(0)).sum();
                accumulate(r.inputs[0], in(1)(0, 0) * g);
                accumulate(r.inputs[1], s);
                break;
            }
            case Op::matmul:
                accumulate(r.inputs[0], g * in(1).transpose());
                accumulate(r.inputs[1], in(0).transpose() * g);
                break;
            case Op::tanh:
                accumulate(r.inputs[0],
                           g.cwiseProduct((1.0 - r.value.array().square()).matrix()));
                break;
            case Op::relu:
                accumulate(r.inputs[0],
                           g.cwiseProduct((in(0).array() > 0.0).cast<double>().matrix()));
                break;
            case Op::log:
                accumulate(r.inputs[0], g.cwiseQuotient(in(0)));
                break;
            case Op::square:
                accumulate(r.inputs[0], 2.0 * g.cwiseProduct(in(0)));
                break;
            case Op::sum:
                accumulate(r.inputs[0], Matrix::Constant(in(0).rows(), in(0).cols(), g(0, 0)));
                break;
            case Op::append_ones:
                accumulate(r.inputs[0], g.leftCols(g.cols() - 1));
                break;
            case Op::custom: {
                std::vector<const Matrix*> args;
                args.reserve(r.inputs.size());
                for (Node n : r.inputs) {
                    args.push_back(&nodes_[n].value);
                }
                std::vector<Matrix> parts = custom_rules_[r.custom_index].backward(args, r.value, g);
                if (parts.size() != r.inputs.size()) {
                    throw std::logic_error("custom backward returned wrong number of adjoints");
                }
                for (std::size_t k = 0; k < parts.size(); ++k) {
                    accumulate(r.inputs[k], parts[k]);
                }
                break;
            }
        }
    }

    std::vector<Matrix> grads;
    grads.reserve(parameters_.size());
    for (Node p : parameters_) {
        if (p <= output && touched[p]) {
            grads.push_back(adj[p]);
        } else {
            grads.push_back(Matrix::Zero(nodes_[p].value.rows(), nodes_[p].value.cols()));
        }
    }
    return grads;
}

}  // namespace bers
