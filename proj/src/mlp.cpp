// SPDX-License-Identifier: Apache-2.0
#include "causalbeam/mlp.hpp"

#include "causalbeam/errors.hpp"
#include "causalbeam/rng.hpp"
#include "causalbeam/textio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace causalbeam {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::size_t MlpModel::parameter_count() const
{
    std::size_t n = 0;
    for (const DenseLayer &l : layers)
        n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

void MlpModel::validate() const
{
    if (sizes.size() < 2 || layers.size() != sizes.size() - 1)
        throw std::invalid_argument("MlpModel: layer list does not match sizes");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const DenseLayer &L = layers[l];
        if (static_cast<std::size_t>(L.weight.rows()) != sizes[l + 1] ||
            static_cast<std::size_t>(L.weight.cols()) != sizes[l] ||
            static_cast<std::size_t>(L.bias.size()) != sizes[l + 1])
            throw std::invalid_argument("MlpModel: layer " + std::to_string(l) + " has wrong dimensions");
        if (!L.weight.allFinite() || !L.bias.allFinite())
            throw std::invalid_argument("MlpModel: non-finite parameter in layer " + std::to_string(l));
    }
    if (static_cast<std::size_t>(input_shift.size()) != sizes.front() ||
        static_cast<std::size_t>(input_scale.size()) != sizes.front())
        throw std::invalid_argument("MlpModel: input normalization has wrong length");
    if (!(input_scale.array() > 0.0).all())
        throw std::invalid_argument("MlpModel: input scale must be positive");
}

MlpModel init_model(std::size_t input_dim, std::size_t y_classes, std::uint64_t seed,
                    const std::vector<std::size_t> &hidden)
{
    if (input_dim == 0 || y_classes == 0)
        throw std::invalid_argument("init_model: input_dim and y_classes must be >= 1");
    MlpModel m;
    m.sizes.push_back(input_dim);
    m.sizes.insert(m.sizes.end(), hidden.begin(), hidden.end());
    m.sizes.push_back(y_classes);
    m.seed = seed;
    m.input_shift = VectorXd::Zero(static_cast<Index>(input_dim));
    m.input_scale = VectorXd::Ones(static_cast<Index>(input_dim));

    Rng rng = make_stream(seed, "init");
    for (std::size_t l = 0; l + 1 < m.sizes.size(); ++l) {
        const auto in = static_cast<Index>(m.sizes[l]);
        const auto out = static_cast<Index>(m.sizes[l + 1]);
        // He-uniform: Var(w) = 2 / fan_in.
        const double limit = std::sqrt(6.0 / static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-limit, limit);
        DenseLayer L{MatrixXd(out, in), VectorXd::Zero(out)};
        for (Index r = 0; r < out; ++r)
            for (Index c = 0; c < in; ++c)
                L.weight(r, c) = dist(rng);
        m.layers.push_back(std::move(L));
    }
    return m;
}

MatrixXd softmax(const MatrixXd &logits)
{
    MatrixXd p = logits.colwise() - logits.rowwise().maxCoeff();
    p = p.array().exp().matrix();
    const VectorXd sums = p.rowwise().sum();
    return sums.cwiseInverse().asDiagonal() * p;
}

namespace {

MatrixXd normalize_inputs(const MlpModel &m, const MatrixXd &X)
{
    if (static_cast<std::size_t>(X.cols()) != m.input_dim())
        throw std::invalid_argument("forward: expected " + std::to_string(m.input_dim()) + " inputs, got " +
                                    std::to_string(X.cols()));
    return (X.rowwise() - m.input_shift.transpose()) * m.input_scale.cwiseInverse().asDiagonal();
}

/// Forward pass keeping the pre-activations of every layer.
void forward_cached(const MlpModel &m, const MatrixXd &X, std::vector<MatrixXd> &inputs,
                    std::vector<MatrixXd> &pre)
{
    const std::size_t L = m.layers.size();
    inputs.resize(L);
    pre.resize(L);
    inputs[0] = normalize_inputs(m, X);
    for (std::size_t l = 0; l < L; ++l) {
        pre[l] = inputs[l] * m.layers[l].weight.transpose();
        pre[l].rowwise() += m.layers[l].bias.transpose();
        if (l + 1 < L)
            inputs[l + 1] = pre[l].cwiseMax(0.0);
    }
}

/// Per-row log-sum-exp.
VectorXd row_lse(const MatrixXd &z)
{
    const VectorXd mx = z.rowwise().maxCoeff();
    return mx + ((z.colwise() - mx).array().exp().rowwise().sum().log()).matrix();
}

void check_labels(const std::vector<std::size_t> &labels, Index rows, std::size_t classes)
{
    if (static_cast<Index>(labels.size()) != rows)
        throw std::invalid_argument("labels: count does not match batch rows");
    for (std::size_t y : labels)
        if (y >= classes)
            throw std::invalid_argument("labels: label out of range");
}

double loss_gradient_impl(const MlpModel &m, const MatrixXd &X, const std::vector<std::size_t> &labels,
                          Gradients &grad, std::size_t *correct)
{
    check_labels(labels, X.rows(), m.output_dim());
    if (X.rows() == 0)
        throw std::invalid_argument("loss_and_gradient: empty batch");
    std::vector<MatrixXd> inputs, pre;
    forward_cached(m, X, inputs, pre);
    const std::size_t L = m.layers.size();
    const MatrixXd &logits = pre[L - 1];
    const auto B = static_cast<double>(X.rows());

    const VectorXd lse = row_lse(logits);
    double loss = 0.0;
    MatrixXd delta = (logits.colwise() - lse).array().exp().matrix(); // softmax
    std::size_t hits = 0;
    for (Index i = 0; i < logits.rows(); ++i) {
        const auto y = static_cast<Index>(labels[static_cast<std::size_t>(i)]);
        loss += lse[i] - logits(i, y);
        delta(i, y) -= 1.0;
        Index arg = 0;
        logits.row(i).maxCoeff(&arg);
        hits += arg == y ? 1 : 0;
    }
    delta /= B;
    if (correct)
        *correct = hits;

    grad.layers.resize(L);
    for (std::size_t l = L; l-- > 0;) {
        grad.layers[l].weight = delta.transpose() * inputs[l];
        grad.layers[l].bias = delta.colwise().sum().transpose();
        if (l > 0) {
            MatrixXd back = delta * m.layers[l].weight;
            delta = (pre[l - 1].array() > 0.0).select(back, 0.0);
        }
    }
    return loss / B;
}

} // namespace

MatrixXd forward_logits(const MlpModel &m, const MatrixXd &X)
{
    MatrixXd a = normalize_inputs(m, X);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        MatrixXd z = a * m.layers[l].weight.transpose();
        z.rowwise() += m.layers[l].bias.transpose();
        a = (l + 1 < m.layers.size()) ? MatrixXd(z.cwiseMax(0.0)) : std::move(z);
    }
    return a;
}

MatrixXd forward_batch(const MlpModel &m, const MatrixXd &X)
{
    return softmax(forward_logits(m, X));
}

VectorXd forward(const MlpModel &m, const VectorXd &x)
{
    return forward_batch(m, x.transpose()).row(0).transpose();
}

double cross_entropy(const VectorXd &probs, std::size_t label)
{
    if (label >= static_cast<std::size_t>(probs.size()))
        throw std::invalid_argument("cross_entropy: label out of range");
    return -std::log(std::max(probs[static_cast<Index>(label)], 1e-12));
}

double cross_entropy(const MatrixXd &probs, const std::vector<std::size_t> &labels)
{
    check_labels(labels, probs.rows(), static_cast<std::size_t>(probs.cols()));
    if (labels.empty())
        throw std::invalid_argument("cross_entropy: empty batch");
    double s = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        s += cross_entropy(VectorXd(probs.row(static_cast<Index>(i)).transpose()), labels[i]);
    return s / static_cast<double>(labels.size());
}

double loss_and_gradient(const MlpModel &m, const MatrixXd &X, const std::vector<std::size_t> &labels,
                         Gradients &grad)
{
    return loss_gradient_impl(m, X, labels, grad, nullptr);
}

std::vector<std::size_t> topk_indices(const Eigen::Ref<const VectorXd> &scores, std::size_t k)
{
    const auto n = static_cast<std::size_t>(scores.size());
    if (k == 0 || k > n)
        throw std::invalid_argument("topk: k must be in [1, " + std::to_string(n) + "]");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double sa = scores[static_cast<Index>(a)];
                          const double sb = scores[static_cast<Index>(b)];
                          return sa > sb || (sa == sb && a < b);
                      });
    idx.resize(k);
    return idx;
}

std::vector<std::size_t> predict_topk(const MlpModel &m, const VectorXd &x, std::size_t k)
{
    return topk_indices(forward(m, x), k);
}

void TrainConfig::validate() const
{
    if (epochs == 0 || batch_size == 0)
        throw std::invalid_argument("TrainConfig: epochs and batch_size must be >= 1");
    if (!(learning_rate > 0.0))
        throw std::invalid_argument("TrainConfig: learning rate must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
        !(adam_eps > 0.0))
        throw std::invalid_argument("TrainConfig: invalid Adam constants");
}

MatrixXd gather_features(const Dataset &d, const std::vector<std::size_t> &rows,
                         const std::vector<std::size_t> &features)
{
    MatrixXd X(static_cast<Index>(rows.size()), static_cast<Index>(features.size()));
    for (std::size_t j = 0; j < features.size(); ++j) {
        if (features[j] >= d.m_w)
            throw std::invalid_argument("gather_features: feature " + std::to_string(features[j]) +
                                        " out of range");
        for (std::size_t i = 0; i < rows.size(); ++i)
            X(static_cast<Index>(i), static_cast<Index>(j)) =
                d.rssi(static_cast<Index>(rows[i]), static_cast<Index>(features[j]));
    }
    return X;
}

std::vector<std::size_t> gather_labels(const Dataset &d, const std::vector<std::size_t> &rows)
{
    std::vector<std::size_t> y;
    y.reserve(rows.size());
    for (std::size_t r : rows)
        y.push_back(d.labels.at(r));
    return y;
}

TrainResult train(const Dataset &d, const std::vector<std::size_t> &features, const TrainConfig &cfg)
{
    if (features.empty())
        throw std::invalid_argument("train: empty feature subset");
    return train(init_model(features.size(), d.y_classes, cfg.seed), d, features, cfg);
}

TrainResult train(MlpModel model, const Dataset &d, const std::vector<std::size_t> &features,
                  const TrainConfig &cfg)
{
    if (features.empty())
        throw std::invalid_argument("train: empty feature subset");
    if (model.input_dim() != features.size())
        throw std::invalid_argument("train: model input size does not match the feature subset");
    const auto tr = d.indices(Split::train);
    const auto va = d.indices(Split::val);
    return train_arrays(std::move(model), gather_features(d, tr, features), gather_labels(d, tr),
                        gather_features(d, va, features), gather_labels(d, va), cfg);
}

TrainResult train_arrays(MlpModel model, const MatrixXd &X_train, const std::vector<std::size_t> &y_train,
                         const MatrixXd &X_val, const std::vector<std::size_t> &y_val, const TrainConfig &cfg)
{
    cfg.validate();
    model.validate();
    if (X_train.rows() == 0)
        throw std::invalid_argument("train: empty training split");
    check_labels(y_train, X_train.rows(), model.output_dim());
    check_labels(y_val, X_val.rows(), model.output_dim());

    model.input_shift = X_train.colwise().mean().transpose();
    const MatrixXd centered = X_train.rowwise() - model.input_shift.transpose();
    model.input_scale =
        (centered.colwise().squaredNorm() / static_cast<double>(X_train.rows())).cwiseSqrt().transpose();
    for (Index j = 0; j < model.input_scale.size(); ++j)
        if (!(model.input_scale[j] > 0.0))
            model.input_scale[j] = 1.0;

    const std::size_t L = model.layers.size();
    std::vector<DenseLayer> m1(L), m2(L);
    for (std::size_t l = 0; l < L; ++l) {
        m1[l] = {MatrixXd::Zero(model.layers[l].weight.rows(), model.layers[l].weight.cols()),
                 VectorXd::Zero(model.layers[l].bias.size())};
        m2[l] = m1[l];
    }

    TrainResult result;
    result.model = model;
    double best_val = -1.0;
    const auto n = static_cast<std::size_t>(X_train.rows());
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Gradients grad;
    MatrixXd Xb;
    std::vector<std::size_t> yb;
    std::uint64_t step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng = make_stream(cfg.seed, "shuffle", epoch);
        std::shuffle(perm.begin(), perm.end(), rng);
        double loss_sum = 0.0;
        std::size_t hits = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            Xb.resize(static_cast<Index>(end - start), X_train.cols());
            yb.resize(end - start);
            for (std::size_t i = start; i < end; ++i) {
                Xb.row(static_cast<Index>(i - start)) = X_train.row(static_cast<Index>(perm[i]));
                yb[i - start] = y_train[perm[i]];
            }
            std::size_t batch_hits = 0;
            const double loss = loss_gradient_impl(model, Xb, yb, grad, &batch_hits);
            loss_sum += loss * static_cast<double>(end - start);
            hits += batch_hits;

            ++step;
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
            const double lr = cfg.learning_rate;
            const auto update = [&](auto &param, auto &mom1, auto &mom2, const auto &g) {
                mom1 = cfg.adam_beta1 * mom1 + (1.0 - cfg.adam_beta1) * g;
                mom2 = cfg.adam_beta2 * mom2 + (1.0 - cfg.adam_beta2) * g.cwiseAbs2();
                param.array() -= lr * (mom1.array() / bc1) / ((mom2.array() / bc2).sqrt() + cfg.adam_eps);
            };
            for (std::size_t l = 0; l < L; ++l) {
                update(model.layers[l].weight, m1[l].weight, m2[l].weight, grad.layers[l].weight);
                update(model.layers[l].bias, m1[l].bias, m2[l].bias, grad.layers[l].bias);
            }
        }

        EpochStats st{loss_sum / static_cast<double>(n), static_cast<double>(hits) / static_cast<double>(n),
                      std::nan(""), std::nan("")};
        if (!y_val.empty()) {
            const MatrixXd logits = forward_logits(model, X_val);
            const VectorXd lse = row_lse(logits);
            double vl = 0.0;
            std::size_t vh = 0;
            for (Index i = 0; i < logits.rows(); ++i) {
                const auto y = static_cast<Index>(y_val[static_cast<std::size_t>(i)]);
                vl += lse[i] - logits(i, y);
                Index arg = 0;
                logits.row(i).maxCoeff(&arg);
                vh += arg == y ? 1 : 0;
            }
            st.val_loss = vl / static_cast<double>(logits.rows());
            st.val_top1 = static_cast<double>(vh) / static_cast<double>(logits.rows());
        }
        if (!std::isfinite(st.train_loss))
            throw NumericalError("train: loss became non-finite at epoch " + std::to_string(epoch));
        result.history.push_back(st);

        const bool use_val = cfg.select_best_val && !y_val.empty();
        if (!use_val || st.val_top1 > best_val) {
            best_val = use_val ? st.val_top1 : best_val;
            result.model = model;
            result.best_epoch = epoch;
        }
    }
    result.model.trained = true;
    return result;
}

namespace {

constexpr std::string_view kModelMagic = "causalbeam-model 1";

std::string join_values(const auto &v)
{
    std::string s;
    for (Index i = 0; i < v.size(); ++i) {
        if (i)
            s += ',';
        s += textio::format_double(v[i]);
    }
    return s;
}

VectorXd parse_values(std::string_view line, std::size_t expected, textio::LineReader &in)
{
    const auto fields = textio::split(line, ',');
    if (fields.size() != expected)
        throw ParseError("expected " + std::to_string(expected) + " values, found " +
                             std::to_string(fields.size()),
                         in.line_number());
    VectorXd v(static_cast<Index>(expected));
    for (std::size_t i = 0; i < expected; ++i)
        v[static_cast<Index>(i)] = textio::parse_double(fields[i], in.line_number());
    return v;
}

} // namespace

std::string format_model(const MlpModel &m)
{
    m.validate();
    std::string out(kModelMagic);
    out += "\nsizes";
    for (std::size_t s : m.sizes)
        out += " " + std::to_string(s);
    out += "\nseed " + std::to_string(m.seed);
    out += "\ntrained " + std::to_string(m.trained ? 1 : 0);
    out += "\ninput_shift " + join_values(m.input_shift);
    out += "\ninput_scale " + join_values(m.input_scale);
    out += '\n';
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        out += "layer " + std::to_string(l) + "\n";
        for (Index r = 0; r < m.layers[l].weight.rows(); ++r)
            out += join_values(VectorXd(m.layers[l].weight.row(r).transpose())) + "\n";
        out += "bias " + join_values(m.layers[l].bias) + "\n";
    }
    return out;
}

MlpModel parse_model(const std::string &text)
{
    textio::LineReader in(text);
    const std::string_view magic = in.expect_line();
    if (magic != kModelMagic)
        throw ParseError("expected '" + std::string(kModelMagic) + "', found '" + std::string(magic) + "'", 1);
    MlpModel m;
    for (std::string_view tok : textio::split(in.expect_field("sizes"), ' '))
        m.sizes.push_back(textio::parse_uint(tok, in.line_number()));
    if (m.sizes.size() < 2)
        throw ParseError("need at least two layer sizes", in.line_number());
    m.seed = textio::parse_uint(in.expect_field("seed"), in.line_number());
    m.trained = textio::parse_uint(in.expect_field("trained"), in.line_number()) != 0;
    m.input_shift = parse_values(in.expect_field("input_shift"), m.sizes.front(), in);
    m.input_scale = parse_values(in.expect_field("input_scale"), m.sizes.front(), in);
    for (std::size_t l = 0; l + 1 < m.sizes.size(); ++l) {
        if (textio::parse_uint(in.expect_field("layer"), in.line_number()) != l)
            throw ParseError("layer index out of sequence", in.line_number());
        DenseLayer L{MatrixXd(static_cast<Index>(m.sizes[l + 1]), static_cast<Index>(m.sizes[l])), {}};
        for (Index r = 0; r < L.weight.rows(); ++r)
            L.weight.row(r) = parse_values(in.expect_line(), m.sizes[l], in).transpose();
        L.bias = parse_values(in.expect_field("bias"), m.sizes[l + 1], in);
        m.layers.push_back(std::move(L));
    }
    try {
        m.validate();
    } catch (const std::invalid_argument &e) {
        throw ParseError(e.what(), in.line_number());
    }
    return m;
}

void save_model(const MlpModel &m, const std::string &path)
{
    textio::write_file(path, format_model(m));
}

MlpModel load_model(const std::string &path)
{
    return parse_model(textio::read_file(path));
}

} // namespace causalbeam
