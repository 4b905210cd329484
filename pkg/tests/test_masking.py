import pytest

from edge_rca.data.loaders import frame_lines
from edge_rca.perception.masking import MaskRuleSet, preprocess, rules_from_config
from edge_rca.utils.config import PerceptionConfig, TimestampFormatConfig
from edge_rca.utils.errors import EmptyTextError, UsageError
from edge_rca.utils.specs import RawLog


def _raw(line, seq=0, arrival_ms=None):
    return RawLog(line=line, source_id="t", seq=seq, arrival_ms=arrival_ms)


def test_hdfs_line_masks_header_numbers_and_block():
    p = preprocess(_raw("081109 203615 148 INFO dfs.DataNode$PacketResponder: "
                        "PacketResponder 1 for block blk_38865049064139660 terminating"), MaskRuleSet())
    assert p.normalized_text == "<*> info dfs.datanode$packetresponder: packetresponder <*> for block <*> terminating"
    assert p.timestamp_source == "parsed"
    assert [ph.kind for ph in p.placeholders] == ["number", "number", "block_id"]


def test_ip_with_slash_and_port_is_one_field():
    p = preprocess(_raw("2024-05-01 10:00:00 Receiving block blk_-1 src: /10.250.19.102:54106 dest: /10.0.0.1:50010"),
                   MaskRuleSet())
    assert p.normalized_text == "receiving block <*> src: <*> dest: <*>"
    assert p.timestamp_ms == 1714557600000


def test_millisecond_timestamps():
    p = preprocess(_raw("2024-05-01 10:00:00.250 ok"), MaskRuleSet())
    assert p.timestamp_ms == 1714557600250
    assert p.normalized_text == "ok"


def test_timestamp_only_line_is_single_placeholder():
    p = preprocess(_raw("2024-05-01 10:00:00"), MaskRuleSet())
    assert p.normalized_text == "<*>"
    assert len(p.placeholders) == 1


def test_embedded_timestamp_is_masked_in_place():
    p = preprocess(_raw("retry scheduled for 2024-05-01 10:00:05 on node"), MaskRuleSet())
    assert p.normalized_text == "retry scheduled for <*> on node"
    assert p.placeholders[0].kind == "timestamp"


def test_unparsable_timestamp_warns_and_uses_arrival():
    p = preprocess(_raw("2024-13-45 10:00:00 disk ok", arrival_ms=5), MaskRuleSet())
    assert "unparsable_timestamp" in p.warnings
    assert p.timestamp_ms == 5
    assert p.normalized_text == "disk ok"


def test_missing_timestamp_inherits_fallback():
    p = preprocess(_raw("disk ok"), MaskRuleSet(), fallback_ms=42)
    assert (p.timestamp_ms, p.timestamp_source) == (42, "inherited")


def test_hex_ids_need_letters_and_digits():
    p = preprocess(_raw("request a0012345abc7 for instance deadbeefcafe done"), MaskRuleSet())
    assert p.normalized_text == "request <*> for instance deadbeefcafe done"


def test_empty_line_and_empty_rules():
    with pytest.raises(EmptyTextError):
        preprocess(_raw("   "), MaskRuleSet())
    with pytest.raises(UsageError):
        preprocess(_raw("disk"), MaskRuleSet(rules=(), timestamp_formats=()))


def test_mask_reuses_existing_placeholders():
    masked, placeholders = MaskRuleSet().mask("Sent <NUM> bytes to 10.0.0.1")
    assert masked == "Sent <*> bytes to <*>"
    assert [p.kind for p in placeholders] == ["literal", "ipv4"]


def test_custom_timestamp_formats():
    cfg = PerceptionConfig(timestamp_formats=[TimestampFormatConfig(pattern=r"\d{2}/\d{2}/\d{4} \d{2}:\d{2}:\d{2}",
                                                                    fmt="%d/%m/%Y %H:%M:%S")])
    p = preprocess(_raw("01/05/2024 10:00:00 disk ok"), rules_from_config(cfg))
    assert p.timestamp_ms == 1714557600000


def test_continuation_lines_join_their_head():
    lines = ["2024-05-01 10:00:00 ERROR boom", "    at a.b(C.java:1)", "Caused by: x", "", "2024-05-01 10:00:01 ok"]
    framed = list(frame_lines(lines, PerceptionConfig().continuation_pattern))
    assert framed == ["2024-05-01 10:00:00 ERROR boom at a.b(C.java:1) Caused by: x", "2024-05-01 10:00:01 ok"]
