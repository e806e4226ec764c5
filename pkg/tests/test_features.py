import hashlib
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switchpred.errors import ConfigError, FormatError
from switchpred.features import (
    ALL_FAMILIES,
    FAMILIES,
    NO_CLICK,
    UNKNOWN,
    BucketingConfig,
    CorpusStats,
    FeatureExtractor,
    action_sequence,
    bucket,
    build_corpus_stats,
    click_positions,
    encode,
    extract_position_features,
    extract_query_features,
    extract_sequence_features,
    extract_timeline_features,
    extract_user_features,
    feature_id,
    ngram_counts,
    parse_family_list,
)
from switchpred.logs import SwitchType

from conftest import sessions_from_text

CFG = BucketingConfig()


def values(features, family):
    return [v for f, v in features if f == family]


def session(body, meta="1\t1\tM\t1\tN"):
    return sessions_from_text(meta + "\n" + body)[0]


class TestFamilies:
    def test_twenty_families(self):
        assert sorted(FAMILIES) == list(range(1, 21))
        assert len(ALL_FAMILIES) == 20

    def test_parse_list(self):
        assert parse_family_list("1,3,7,16") == {"UserID", "QueryID", "URLID", "QueryID_Time"}
        assert parse_family_list("MRR, 20") == {"MRR"}

    @pytest.mark.parametrize("text", ["0", "21", "Nope"])
    def test_parse_list_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_family_list(text)


class TestBucketing:
    def test_bucket(self):
        edges = CFG.time_bucket_edges
        assert [bucket(x, edges) for x in (0, 1, 3, 4, 350, 10**9)] == [0, 1, 2, 3, 9, 15]

    @pytest.mark.parametrize("edges", [(1, 2), (0, 2, 2), ()])
    def test_invalid_edges(self, edges):
        with pytest.raises(ConfigError):
            BucketingConfig(time_bucket_edges=edges)

    def test_dict_round_trip(self):
        cfg = BucketingConfig(ngram_bins=4, url_top_k=3)
        assert BucketingConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            BucketingConfig.from_dict({"bins": 3})


class TestCorpusStats:
    def test_counts(self, fixture_sessions):
        stats = build_corpus_stats(fixture_sessions)
        assert stats.query_count(100) == 2  # sessions, not occurrences
        assert stats.query_count(101) == 1
        assert stats.query_count(999) == 0
        assert stats.url_count(11) == 2
        assert stats.url_count(77) == 0  # clicked but never shown
        assert stats.user_counts(7) == {SwitchType.P: 1, SwitchType.N: 1}
        assert stats.user_counts(99) is None

    def test_json_round_trip(self, fixture_sessions):
        stats = build_corpus_stats(fixture_sessions)
        back = CorpusStats.from_json(stats.to_json())
        assert back.to_json() == stats.to_json()
        assert back.user_counts(8) == {SwitchType.H: 1}

    def test_bad_json(self):
        with pytest.raises(FormatError):
            CorpusStats.from_json('{"version": 99}')


class TestUserFeatures:
    def test_ratio_one_third(self):
        text = "".join(f"{i}\t1\tM\t5\t{t}\n" for i, t in enumerate("NBN", 1))
        stats = build_corpus_stats(sessions_from_text(text))
        s = session("", "9\t1\tM\t5\tN").masked()
        feats = extract_user_features(s, stats, CFG)
        assert ("UserID", 5) in feats
        assert sorted(values(feats, "User_switch_ratio")) == ["B:3", "H:0", "N:6", "P:0"]

    def test_unknown_user(self):
        s = session("", "9\t1\tM\t5\tN").masked()
        feats = extract_user_features(s, CorpusStats(), CFG)
        assert sorted(values(feats, "User_switch_ratio")) == [f"{t}:{UNKNOWN}" for t in "BHNP"]

    def test_leave_one_out_for_training_sessions(self, fixture_sessions):
        fx = FeatureExtractor(build_corpus_stats(fixture_sessions))
        s1, _, s3 = fixture_sessions
        assert sorted(values(fx.features(s1, in_stats=True), "User_switch_ratio")) == ["B:0", "H:0", "N:9", "P:0"]
        assert values(fx.features(s3, in_stats=True), "User_switch_ratio") == [f"{t}:{UNKNOWN}" for t in "NPBH"]
        assert values(fx.features(s3, in_stats=True), "QueryID_Popularity") == [UNKNOWN]


class TestQueryFeatures:
    def test_count_and_duplicates(self):
        s = session("1\t0\tQ\t0\t1\t5\n1\t10\tQ\t1\t2\t5\n1\t20\tQ\t2\t1\t5")
        feats = extract_query_features(s, CorpusStats(), CFG)
        assert values(feats, "Query_Count") == [3]
        assert values(feats, "Query_Duplicate") == [2]
        assert values(feats, "QueryID") == [1, 2, 1]

    def test_count_cap(self):
        body = "\n".join(f"1\t{i}\tQ\t{i}\t{i}\t5" for i in range(30))
        feats = extract_query_features(session(body), CorpusStats(), CFG)
        assert values(feats, "Query_Count") == [CFG.query_count_cap]

    def test_popularity_buckets(self, fixture_sessions):
        stats = build_corpus_stats(fixture_sessions)
        feats = extract_query_features(fixture_sessions[0], stats, CFG)
        assert values(feats, "QueryID_Popularity") == [1, 1]


class TestUrlFeatures:
    def test_fixture(self, fixture_sessions):
        fx = FeatureExtractor(build_corpus_stats(fixture_sessions))
        feats = fx.features(fixture_sessions[0])
        assert values(feats, "URLID") == list(range(11, 31))
        assert values(feats, "Query_URLid_List")[:2] == ["100:11:1", "100:12:2"]
        assert len(values(feats, "Query_URLid_List")) == 20
        assert values(feats, "ClickedURL_Filtered") == [16, 19, 11]
        assert values(feats, "URL_Popularity") == [1]

    def test_top_k(self, fixture_sessions):
        fx = FeatureExtractor(build_corpus_stats(fixture_sessions), BucketingConfig(url_top_k=3))
        feats = fx.features(fixture_sessions[2])
        assert values(feats, "Query_URLid_List") == ["102:31:1", "102:32:2", "102:33:3"]


class TestSequenceFeatures:
    def test_action_sequence(self, fixture_sessions):
        assert action_sequence(fixture_sessions[0]) == "MQCSCQC"
        assert action_sequence(fixture_sessions[0].masked()) == "MQCCQC"

    def test_ngram_counts(self):
        assert ngram_counts("QQQQC", 4) == {"QQQQ": 1, "QQQC": 1}
        assert ngram_counts("QQ", 4) == {}

    def test_single_gram_in_top_bin(self):
        s = session("1\t0\tQ\t0\t1\t5\n1\t1\tQ\t1\t1\t5\n1\t2\tQ\t2\t1\t5")
        feats = extract_sequence_features(s, CFG)
        assert values(feats, "Pattern_4gram_Normed") == ["MQQQ:7"]
        assert values(feats, "Pattern_5gram_Normed") == []

    def test_shares(self, fixture_sessions):
        feats = extract_sequence_features(fixture_sessions[0].masked(), CFG)
        # three distinct 4-grams, each a third: floor(8/3) = 2
        assert values(feats, "Pattern_4gram_Normed") == ["CCQC:2", "MQCC:2", "QCCQ:2"]
        assert values(feats, "Pattern_6gram_Normed") == ["MQCCQC:7"]

    def test_long_sequence_capped(self):
        body = "\n".join(f"1\t{i}\tQ\t{i}\t1\t5" for i in range(200))
        (token,) = values(extract_sequence_features(session(body), CFG), "Action_Sequence")
        assert len(token) == CFG.sequence_cap + 1 and "~" in token


class TestTimelineFeatures:
    def test_intervals(self):
        s = session("1\t0\tQ\t0\t1\t5,6\n1\t50\tC\t0\t5\n1\t400\tQ\t1\t2\t7")
        feats = extract_timeline_features(s, CFG)
        assert values(feats, "QueryID_Time") == [0, bucket(400, CFG.time_bucket_edges)]
        assert values(feats, "Query_Click_Interval") == [bucket(50, CFG.interval_bucket_edges)]
        assert values(feats, "Click_NextQuery_Interval") == [bucket(350, CFG.interval_bucket_edges)]

    def test_no_clicks(self):
        s = session("1\t0\tQ\t0\t1\t5\n1\t10\tQ\t1\t2\t7")
        feats = extract_timeline_features(s, CFG)
        assert values(feats, "Query_Click_Interval") == []
        assert values(feats, "Click_NextQuery_Interval") == []


class TestPositionFeatures:
    def test_positions_and_mrr(self):
        urls = ",".join(str(u) for u in range(101, 111))
        s = session(f"1\t0\tQ\t0\t1\t{urls}\n1\t5\tC\t0\t101\n1\t6\tC\t0\t106\n1\t7\tC\t0\t109")
        positions, skipped = click_positions(s)
        assert positions == {0: [1, 6, 9]} and skipped == 0
        feats = extract_position_features(s, CFG)
        assert values(feats, "Click_Position_Count") == [2]
        mrr = (1 + 1 / 6 + 1 / 9) / 3
        assert mrr == pytest.approx(0.4259, abs=1e-4)
        assert values(feats, "MRR") == [bucket(mrr, CFG.ratio_bucket_edges)] == [4]

    def test_unresolvable_clicks_skipped(self, fixture_sessions):
        positions, skipped = click_positions(fixture_sessions[2])
        assert positions == {0: []} and skipped == 2
        assert values(extract_position_features(fixture_sessions[2], CFG), "MRR") == [NO_CLICK]


class TestEncoding:
    def test_golden_ids(self):
        assert feature_id("UserID", 7) == 15239497322738952663
        assert feature_id("QueryID", 7) == 3297815482596436596

    def test_golden_vector(self, fixture_sessions):
        fx = FeatureExtractor(build_corpus_stats(fixture_sessions))
        x = fx.vector(fixture_sessions[0])
        digest = hashlib.sha256(repr(sorted(x)).encode()).hexdigest()
        assert len(x) == 68
        assert digest == "3db5a296385ce67b8d82da4703488578569d7260c2a8c4858589d706ce8d7f35"

    def test_families_are_namespaced(self):
        assert feature_id("UserID", 7) != feature_id("QueryID", 7)
        assert feature_id("UserID", 7) == feature_id("UserID", "7")

    def test_encode_dedups(self):
        x = encode([("QueryID", 100), ("QueryID", 100), ("URLID", 100)])
        assert len(x) == 2

    def test_ids_fit_in_64_bits(self, fixture_sessions):
        fx = FeatureExtractor(build_corpus_stats(fixture_sessions))
        assert all(0 <= i < 2**64 for s in fixture_sessions for i in fx.vector(s))


class TestExtractor:
    def test_covers_all_families(self, fixture_sessions):
        body = "\n".join(f"4\t{i}\tQ\t{i}\t1\t5" for i in range(6))
        sessions = fixture_sessions + [session(body, "4\t1\tM\t1\tN")]
        fx = FeatureExtractor(build_corpus_stats(sessions))
        seen = {f for s in sessions for f, _ in fx.features(s)}
        assert seen == ALL_FAMILIES

    def test_family_subset(self, fixture_sessions):
        fams = parse_family_list("1,3")
        fx = FeatureExtractor(build_corpus_stats(fixture_sessions), families=fams)
        assert {f for f, _ in fx.features(fixture_sessions[0])} == fams

    def test_unknown_family(self):
        with pytest.raises(ConfigError):
            FeatureExtractor(CorpusStats(), families={"Bogus"})

    def test_purity(self, fixture_sessions):
        fx = FeatureExtractor(build_corpus_stats(fixture_sessions))
        for s in fixture_sessions:
            assert fx.features(s) == fx.features(s.masked())

    @settings(max_examples=50, deadline=None)
    @given(st.sampled_from(list(SwitchType)))
    def test_switch_type_does_not_leak(self, st_):
        sessions = sessions_from_text(
            "1\t1\tM\t1\tN\n1\t0\tQ\t0\t1\t5,6\n1\t3\tC\t0\t6\n2\t1\tM\t1\tP\n2\t0\tQ\t0\t1\t5"
        )
        fx = FeatureExtractor(build_corpus_stats(sessions))
        s = sessions[0]
        assert fx.features(s) == fx.features(replace(s, switch_type=st_))
