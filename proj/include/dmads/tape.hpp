#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "dmads/tensor.hpp"

namespace dmads {

// Define-by-run record of differentiable operations. Entries are appended in
// execution order, so reverse iteration visits every node after all of its
// consumers.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void()>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    ~Tape();

    void record(std::string_view op, BackwardFn fn);

    // Seeds d(loss)/d(loss) = 1 and replays the tape once. A tape can only be
    // replayed once; a second call throws AutodiffError.
    void backward(const Tensor<T>& loss);

    std::size_t size() const { return nodes_.size(); }
    std::vector<std::string> op_names() const;
    bool consumed() const { return consumed_; }

    // Tape that ops record onto on the calling thread, or nullptr.
    static Tape* active();

private:
    struct Node {
        std::string op;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    bool consumed_ = false;
    bool replaying_ = false;

    template <typename>
    friend class TapeScope;
    template <typename>
    friend class NoGradScope;
    static Tape*& active_slot();
};

// Activates a tape on the current thread for the lifetime of the scope.
template <typename T>
class TapeScope {
public:
    explicit TapeScope(Tape<T>& tape) : previous_(Tape<T>::active_slot()) { Tape<T>::active_slot() = &tape; }
    ~TapeScope() { Tape<T>::active_slot() = previous_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape<T>* previous_;
};

// Suspends recording (inference, or work done inside a backward pass).
template <typename T>
class NoGradScope {
public:
    NoGradScope() : previous_(Tape<T>::active_slot()) { Tape<T>::active_slot() = nullptr; }
    ~NoGradScope() { Tape<T>::active_slot() = previous_; }
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape<T>* previous_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace dmads
