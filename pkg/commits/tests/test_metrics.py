import math
import random

from django.test import SimpleTestCase

from commits.exceptions import EmptyReference, EmptySequence
from commits.metrics import (
    METRIC_NAMES, align, bleu, brevity_penalty, corpus_bleu, corpus_report, count_chunks, meteor, rouge_l,
    sentence_report,
)


class BleuTests(SimpleTestCase):
    def test_identity(self):
        tokens = 'fix null pointer in parser'.split()
        for n in (1, 2, 3, 4):
            self.assertAlmostEqual(bleu(tokens, tokens, n), 100.0)

    def test_brevity_penalty(self):
        self.assertAlmostEqual(brevity_penalty(3, 6), math.exp(-1))
        self.assertEqual(brevity_penalty(7, 6), 1.0)
        self.assertAlmostEqual(bleu('a b c'.split(), 'a b c d e f'.split(), 1), 36.7879, places=3)

    def test_hand_counted_ngrams(self):
        expected = 100 * math.exp((math.log(0.75) + math.log(2 / 3) + math.log(0.5) + math.log(1e-9)) / 4)
        self.assertAlmostEqual(bleu('a b c d'.split(), 'a b c e'.split()), expected)

    def test_clipping(self):
        self.assertAlmostEqual(bleu('the the the'.split(), 'the cat'.split(), 1), 100 / 3)

    def test_empty_inputs(self):
        self.assertEqual(bleu([], ['a']), 0.0)
        with self.assertRaises(EmptyReference):
            bleu(['a'], [])
        with self.assertRaises(ValueError):
            bleu(['a'], ['a'], 5)

    def test_corpus_pools_counts(self):
        pairs = [('a b c d'.split(), 'a b c d'.split()), ('a b'.split(), 'a b'.split())]
        self.assertAlmostEqual(corpus_bleu(pairs, 2), 100.0)
        pairs = [('a b'.split(), 'a b c d'.split())]
        self.assertAlmostEqual(corpus_bleu(pairs, 1), 100 * math.exp(1 - 2))


class RougeTests(SimpleTestCase):
    def test_scores(self):
        self.assertEqual(rouge_l('a b c'.split(), 'a b c'.split()), 100.0)
        self.assertAlmostEqual(rouge_l('a b c d'.split(), 'a c b d'.split()), 75.0)
        self.assertEqual(rouge_l('a b'.split(), 'c d'.split()), 0.0)

    def test_empty(self):
        with self.assertRaises(EmptySequence):
            rouge_l([], ['a'])


class MeteorTests(SimpleTestCase):
    def test_identical_pair(self):
        self.assertAlmostEqual(meteor(['a', 'b'], ['a', 'b']), 93.75)

    def test_swapped_pair(self):
        self.assertAlmostEqual(meteor(['b', 'a'], ['a', 'b']), 50.0)

    def test_no_overlap(self):
        self.assertEqual(meteor(['a'], ['b']), 0.0)

    def test_alignment_prefers_fewer_chunks(self):
        pairs = align(['a', 'b'], ['a', 'c', 'a', 'b'])
        self.assertEqual(pairs, [(0, 2), (1, 3)])
        self.assertEqual(count_chunks(pairs), 1)

    def test_alignment_maximizes_matches(self):
        pairs = align('a b a'.split(), 'b a a'.split())
        self.assertEqual(len(pairs), 3)

    def test_long_sequences_use_the_greedy_matcher(self):
        candidate = [f"t{i % 7}" for i in range(30)]
        reference = [f"t{i % 5}" for i in range(25)]
        score = meteor(candidate, reference)
        self.assertTrue(0.0 < score <= 100.0)

    def test_penalty_keeps_score_below_f_mean(self):
        candidate, reference = 'a b c x'.split(), 'c a b y'.split()
        pairs = align(candidate, reference)
        precision, recall = len(pairs) / 4, len(pairs) / 4
        f_mean = 100 * 10 * precision * recall / (recall + 9 * precision)
        self.assertLess(meteor(candidate, reference), f_mean)

    def test_empty(self):
        with self.assertRaises(EmptySequence):
            meteor(['a'], [])


class ReportTests(SimpleTestCase):
    def test_single_pair(self):
        candidate, reference = 'fix bug in parser'.split(), 'fix parser bug'.split()
        self.assertEqual(corpus_report([(candidate, reference)]), sentence_report(candidate, reference))

    def test_average_of_perfect_and_disjoint(self):
        report = corpus_report([('a b c d'.split(), 'a b c d'.split()), ('e f g h'.split(), 'a b c d'.split())])
        for name in ('bleu1', 'bleu2', 'bleu3', 'bleu4', 'rouge_l'):
            self.assertAlmostEqual(getattr(report, name), 50.0, places=5)
        self.assertAlmostEqual(report.meteor, meteor('a b c d'.split(), 'a b c d'.split()) / 2)

    def test_average_matches_individual_scores(self):
        rng = random.Random(3)
        words = 'fix add remove test bug null check update'.split()
        pairs = [([rng.choice(words) for _ in range(rng.randint(1, 6))],
                  [rng.choice(words) for _ in range(rng.randint(1, 6))]) for _ in range(10)]
        report = corpus_report(pairs)
        for name in METRIC_NAMES:
            expected = sum(getattr(sentence_report(c, r), name) for c, r in pairs) / 10
            self.assertAlmostEqual(getattr(report, name), expected)

    def test_corpus_mode_and_empty_candidates(self):
        pairs = [([], 'a b'.split()), ('a b'.split(), 'a b'.split())]
        report = corpus_report(pairs, mode='corpus')
        self.assertEqual(report.rouge_l, 50.0)
        self.assertAlmostEqual(report.bleu1, 100 * math.exp(1 - 4 / 2))
        with self.assertRaises(ValueError):
            corpus_report(pairs, mode='median')
        with self.assertRaises(EmptySequence):
            corpus_report([])

    def test_scores_stay_in_range(self):
        rng = random.Random(0)
        words = 'a b c d e f'.split()
        for _ in range(2000):
            candidate = [rng.choice(words) for _ in range(rng.randint(1, 12))]
            reference = [rng.choice(words) for _ in range(rng.randint(1, 12))]
            report = sentence_report(candidate, reference)
            for name, value in report.to_dict().items():
                self.assertTrue(0.0 <= value <= 100.0 + 1e-9, (name, value, candidate, reference))
            self.assertEqual(report.rouge_l == 100.0, candidate == reference)
