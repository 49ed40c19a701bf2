import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from commits import autodiff as ad
from commits.exceptions import ConfigMismatch, MissingArtifact, NonFiniteDetected, ShapeMismatch
from commits.gradcheck import grad_check
from commits.layers import LSTM, Linear
from commits.params import ParamStore, adam_step, load_checkpoint, save_checkpoint

# (name, parameter shapes, forward)
PRIMITIVES = (
    ('matmul', [(3, 4), (4, 2)], lambda a, b: ad.matmul(a, b)),
    ('batched_matmul', [(2, 3, 4), (2, 4, 3)], lambda a, b: ad.matmul(a, b)),
    ('add_broadcast', [(3, 4), (4,)], lambda a, b: ad.add(a, b)),
    ('sub', [(3, 4), (3, 4)], lambda a, b: ad.sub(a, b)),
    ('mul', [(3, 4), (3, 1)], lambda a, b: ad.mul(a, b)),
    ('div', [(2, 5), (2, 5)], lambda a, b: ad.div(a, ad.add(ad.mul(b, b), 1.0))),
    ('concat', [(2, 3), (2, 2)], lambda a, b: ad.concat([a, b], axis=-1)),
    ('stack', [(2, 3), (2, 3)], lambda a, b: ad.stack([a, b], axis=1)),
    ('slice', [(4, 5)], lambda a: a[1:3, ::2]),
    ('reshape', [(2, 6)], lambda a: ad.reshape(a, (3, 4))),
    ('transpose', [(2, 3, 4)], lambda a: ad.transpose(a, (2, 0, 1))),
    ('tanh', [(3, 3)], ad.tanh),
    ('sigmoid', [(3, 3)], ad.sigmoid),
    ('relu', [(3, 3)], ad.relu),
    ('softmax', [(3, 5)], lambda a: ad.softmax(a, axis=-1)),
    ('softmax_masked', [(2, 4)], lambda a: ad.softmax(a, mask=np.array([[1, 1, 0, 1], [0, 1, 1, 0]], dtype=bool))),
    ('log_softmax', [(3, 4)], ad.log_softmax),
    ('embedding_lookup', [(5, 3)], lambda t: ad.embedding_lookup(t, [[0, 2, 2], [4, 0, 1]])),
    ('sum_axis', [(3, 4)], lambda a: ad.sum(a, axis=0)),
    ('mean_axis', [(3, 4)], lambda a: ad.mean(a, axis=-1, keepdims=True)),
    ('conv_2d', [(2, 1, 5, 4), (3, 1, 3, 3), (3,)], lambda x, k, b: ad.conv_2d(x, k, b)),
    ('max_pool_2d', [(2, 3, 4, 6)], lambda x: ad.max_pool_2d(x, (2, 2), (2, 2))),
    ('cross_entropy', [(2, 3, 5)],
     lambda a: ad.cross_entropy_with_logits(a, [[1, 0, 4], [2, 2, 3]], mask=np.array([[1, 1, 1], [1, 0, 0]]))),
    ('mse', [(6,), (6,)], lambda a, b: ad.mse(a, b)),
)


def weighted_check(forward, shapes, seed, **options):
    """Grad-check ``sum(forward(params) * w)`` for a fixed random ``w``."""
    rng = np.random.default_rng(seed)
    store = ParamStore()
    params = [store.add(f"p{i}", shape, init=rng.normal(size=shape)) for i, shape in enumerate(shapes)]
    with ad.no_grad():
        out_shape = forward(*params).shape
    weights = rng.normal(size=out_shape)
    return grad_check(lambda: ad.sum(ad.mul(forward(*params), weights)), store, **options)


class PrimitiveTests(SimpleTestCase):
    def test_softmax_of_equal_logits_is_uniform(self):
        out = ad.softmax(ad.tensor([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [1 / 3] * 3, rtol=1e-6)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        for scale in (1.0, 10.0, 100.0):
            out = ad.softmax(ad.tensor(rng.normal(scale=scale, size=(4, 6))), axis=-1)
            self.assertTrue(np.all(out.data >= 0))
            np.testing.assert_allclose(out.data.sum(axis=-1), np.ones(4), atol=1e-6)

    def test_masked_softmax_gives_exact_zeros(self):
        out = ad.softmax(ad.tensor([[3.0, 1.0, 2.0]]), mask=np.array([[True, False, True]]))
        self.assertEqual(out.data[0, 1], 0.0)
        self.assertAlmostEqual(float(out.data.sum()), 1.0, places=6)

    def test_cross_entropy_of_confident_logits(self):
        with ad.precision(np.float64):
            logits = ad.tensor([10.0, -10.0], requires_grad=True)
            loss = ad.cross_entropy_with_logits(logits, 0)
            loss.backward()
        expected = np.log1p(np.exp(-20.0))
        self.assertAlmostEqual(loss.item() / expected, 1.0, places=6)
        self.assertAlmostEqual(logits.grad[1] / expected, 1.0, places=6)
        self.assertAlmostEqual(logits.grad[0] / -expected, 1.0, places=6)

    def test_max_pool(self):
        out = ad.max_pool_2d(ad.tensor([[1.0, 2.0], [3.0, 4.0]]), (2, 2), (2, 2))
        np.testing.assert_array_equal(out.data, [[4.0]])

    def test_conv_with_identity_kernel(self):
        x = ad.tensor(np.random.default_rng(1).normal(size=(2, 1, 5, 6)))
        out = ad.conv_2d(x, ad.tensor(np.ones((1, 1, 1, 1))), ad.tensor(np.zeros(1)))
        np.testing.assert_allclose(out.data, x.data)

    def test_shape_mismatch_names_both_shapes(self):
        with self.assertRaises(ShapeMismatch) as caught:
            ad.matmul(ad.tensor(np.ones((2, 3))), ad.tensor(np.ones((2, 3))))
        self.assertEqual(caught.exception.shapes, ((2, 3), (2, 3)))
        with self.assertRaises(ShapeMismatch):
            ad.add(ad.tensor(np.ones((2, 3))), ad.tensor(np.ones(4)))

    def test_finite_guard(self):
        with np.errstate(divide='ignore'), ad.finite_guard():
            with self.assertRaises(NonFiniteDetected):
                ad.div(ad.tensor([1.0]), ad.tensor([0.0]))
        with np.errstate(divide='ignore'):
            self.assertTrue(np.isinf(ad.div(ad.tensor([1.0]), ad.tensor([0.0])).data[0]))

    def test_no_grad_builds_no_graph(self):
        weight = ad.tensor(np.ones(3), requires_grad=True)
        with ad.no_grad():
            out = ad.tanh(weight)
        self.assertFalse(out.requires_grad)

    def test_float32_by_default(self):
        self.assertEqual(ad.tensor([1.0]).data.dtype, np.float32)
        with ad.precision(np.float64):
            self.assertEqual(ad.tensor([1.0]).data.dtype, np.float64)


class DropoutTests(SimpleTestCase):
    def test_identity_at_inference_and_zero_rate(self):
        x = ad.tensor(np.arange(6.0))
        self.assertIs(ad.dropout(x, 0.4, training=False, rng=np.random.default_rng(0)), x)
        self.assertIs(ad.dropout(x, 0.0, training=True, rng=np.random.default_rng(0)), x)

    def test_expectation_preserved(self):
        p, n = 0.4, 10_000
        out = ad.dropout(ad.tensor(np.ones(n)), p, training=True, rng=np.random.default_rng(0))
        sigma = np.sqrt((1.0 / (1.0 - p) - 1.0) / n)
        self.assertLess(abs(float(out.data.mean()) - 1.0), 3 * sigma)
        values = np.unique(out.data)
        self.assertEqual(len(values), 2)
        self.assertAlmostEqual(float(values[1]), 1.0 / (1.0 - p), places=5)

    def test_rate_out_of_range(self):
        with self.assertRaises(ValueError):
            ad.dropout(ad.tensor([1.0]), 1.0, training=True, rng=np.random.default_rng(0))


class GradCheckTests(SimpleTestCase):
    def test_primitives(self):
        with ad.precision(np.float64):
            for name, shapes, forward in PRIMITIVES:
                for seed in range(5):
                    with self.subTest(op=name, seed=seed):
                        report = weighted_check(forward, shapes, seed, eps=1e-6, tol_rel=1e-5, atol=1e-9)
                        self.assertTrue(report.passed, report.failures[:3])

    def test_square(self):
        with ad.precision(np.float64):
            store = ParamStore()
            theta = store.add('theta', (), init=np.array(3.0))
            report = grad_check(lambda: ad.mul(theta, theta), store, eps=1e-3, tol_rel=1e-6)
        self.assertEqual(report.checked, 1)
        self.assertTrue(report.passed)

    def test_constant_function(self):
        store = ParamStore()
        store.add('w', (2, 2), rng=np.random.default_rng(0))
        report = grad_check(lambda: ad.tensor(5.0), store)
        self.assertTrue(report.passed)
        self.assertEqual(report.max_rel_error, 0.0)

    def test_tanh_regression_in_float32(self):
        rng = np.random.default_rng(4)
        store = ParamStore()
        layer = Linear(store, 'regression', 4, 4, rng=rng)
        self.assertEqual(store.size, 20)
        x, y = rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
        report = grad_check(lambda: ad.mse(ad.tanh(layer(ad.tensor(x))), y), store, eps=1e-3, tol_rel=1e-2,
                            atol=1e-4)
        self.assertEqual(report.checked, 20)
        self.assertTrue(report.passed, report.failures)

    def test_sampled_entries_on_large_stores(self):
        store = ParamStore()
        weight = store.add('w', (30, 10), rng=np.random.default_rng(0))
        report = grad_check(lambda: ad.sum(ad.tanh(weight)), store, max_entries=50)
        self.assertEqual(report.checked, 50)

    def test_lstm_with_padding(self):
        with ad.precision(np.float64):
            rng = np.random.default_rng(2)
            store = ParamStore()
            lstm = LSTM(store, 'lstm', 3, 4, rng=rng)
            inputs = ad.tensor(rng.normal(size=(2, 3, 3)))
            mask = np.array([[1, 1, 1], [1, 1, 0]])
            weights = rng.normal(size=(2, 3, 4))

            def f():
                outputs, last = lstm.run(inputs, mask, reverse=True)
                return ad.add(ad.sum(ad.mul(ad.stack(outputs, axis=1), weights)), ad.sum(last))
            report = grad_check(f, store, eps=1e-6, tol_rel=1e-5, atol=1e-9)
        self.assertTrue(report.passed, report.failures[:3])

    def test_padded_steps_carry_state(self):
        rng = np.random.default_rng(3)
        lstm = LSTM(ParamStore(), 'lstm', 2, 3, rng=rng)
        inputs = ad.tensor(rng.normal(size=(1, 3, 2)))
        outputs, last = lstm.run(inputs, np.array([[1, 1, 0]]))
        np.testing.assert_array_equal(outputs[2].data, outputs[1].data)
        np.testing.assert_array_equal(last.data, outputs[1].data)


class AdamTests(SimpleTestCase):
    def store_with(self, value):
        store = ParamStore()
        store.add('theta', (1,), init=np.array([value]))
        return store

    def test_zero_gradients_leave_parameters(self):
        store = self.store_with(0.5)
        store['theta'].grad = np.zeros(1, dtype=np.float32)
        adam_step(store)
        self.assertEqual(float(store['theta'].data[0]), 0.5)

    def test_first_step(self):
        store = self.store_with(0.0)
        store['theta'].grad = np.ones(1, dtype=np.float32)
        adam_step(store, lr=1e-4)
        self.assertAlmostEqual(float(store['theta'].data[0]), -1e-4, delta=1e-9)
        np.testing.assert_array_equal(store['theta'].grad, [0.0])
        self.assertEqual(store.step, 1)

    def test_constant_gradient_decreases(self):
        store = self.store_with(0.0)
        values = [0.0]
        for _ in range(2):
            store['theta'].grad = np.ones(1, dtype=np.float32)
            adam_step(store)
            values.append(float(store['theta'].data[0]))
        self.assertGreater(values[0], values[1])
        self.assertGreater(values[1], values[2])


class ParamStoreTests(SimpleTestCase):
    def test_xavier_needs_a_generator(self):
        with self.assertRaises(ValueError):
            ParamStore().add('w', (2, 3))

    def test_same_generator_seed_same_values(self):
        first, second = ParamStore(), ParamStore()
        first.add('w', (4, 5), rng=np.random.default_rng(11))
        second.add('w', (4, 5), rng=np.random.default_rng(11))
        np.testing.assert_array_equal(first['w'].data, second['w'].data)

    def test_zeros_and_arrays_need_no_generator(self):
        store = ParamStore()
        store.add('b', (3,), init='zeros')
        store.add('c', (2,), init=np.array([1.0, 2.0]))
        np.testing.assert_array_equal(store['b'].data, np.zeros(3))


class CheckpointTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)
        rng = np.random.default_rng(0)
        self.store = ParamStore()
        Linear(self.store, 'head', 3, 2, rng=rng)
        self.store.add('scalar', (), init=np.array(0.25))

    def test_save_load_save_is_byte_identical(self):
        first, second = self.dir / 'a.ckpt', self.dir / 'b.ckpt'
        save_checkpoint(self.store, first)
        save_checkpoint(load_checkpoint(first), second)
        self.assertEqual(first.read_bytes(), second.read_bytes())
        self.assertTrue(first.read_bytes().startswith(b'CMWCKPT\x00'))

    def test_load_into_matching_store(self):
        path = self.dir / 'a.ckpt'
        save_checkpoint(self.store, path)
        other = ParamStore()
        Linear(other, 'head', 3, 2, rng=np.random.default_rng(9))
        other.add('scalar', (), init='zeros')
        load_checkpoint(path, other)
        self.assertEqual(other.digest(), self.store.digest())

    def test_mismatches(self):
        path = self.dir / 'a.ckpt'
        save_checkpoint(self.store, path)
        other = ParamStore()
        Linear(other, 'head', 3, 3, rng=np.random.default_rng(9))
        with self.assertRaises(ConfigMismatch):
            load_checkpoint(path, other)
        (self.dir / 'junk.ckpt').write_bytes(b'not a checkpoint')
        with self.assertRaises(ConfigMismatch):
            load_checkpoint(self.dir / 'junk.ckpt')
        with self.assertRaises(MissingArtifact):
            load_checkpoint(self.dir / 'absent.ckpt')
