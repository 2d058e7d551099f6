import pytest

from gimli_sifa.kat import KatFormatError, check_vector, format_kat, generate_kat, parse_kat

RECORD = """Count = 1
Key = 000102030405060708090A0B0C0D0E0F101112131415161718191A1B1C1D1E1F
Nonce = 000102030405060708090A0B0C0D0E0F
PT =
AD =
CT = 14DA9BB7120BF58B985A8E00FDEBA15B
"""


def test_parse_single_record():
    (v,) = parse_kat(RECORD)
    assert v.count == 1 and v.pt == b"" and v.ad == b"" and len(v.ct) == 16
    assert v.line == 1
    assert check_vector(v).passed


def test_format_parse_roundtrip():
    vs = generate_kat(3, 2)
    assert len(vs) == 12
    again = parse_kat(format_kat(vs))
    assert [(v.count, v.key, v.nonce, v.pt, v.ad, v.ct) for v in again] == \
        [(v.count, v.key, v.nonce, v.pt, v.ad, v.ct) for v in vs]


def test_generated_first_record_matches_reference():
    assert generate_kat(0, 0)[0].ct.hex().upper() == "14DA9BB7120BF58B985A8E00FDEBA15B"


def test_corrupted_ct_fails_encrypt_and_decrypt():
    (v,) = parse_kat(RECORD.replace("CT = 14", "CT = 15"))
    r = check_vector(v)
    assert not r.encrypt_ok and not r.decrypt_ok and not r.passed


def test_empty_file():
    assert parse_kat("") == []
    assert parse_kat("\n\n# comment\n") == []


def test_bad_hex_reports_line():
    text = RECORD + "\n" + RECORD.replace("Count = 1", "Count = 2").replace("PT =", "PT = 0G")
    with pytest.raises(KatFormatError, match="line 11: bad PT"):
        parse_kat(text)


def test_missing_field():
    with pytest.raises(KatFormatError, match="missing CT"):
        parse_kat(RECORD.replace("CT = 14DA9BB7120BF58B985A8E00FDEBA15B\n", ""))


def test_garbage_line():
    with pytest.raises(KatFormatError, match="line 3"):
        parse_kat("Count = 1\nKey = 00\nthis is not a field\n")


def test_unknown_field():
    with pytest.raises(KatFormatError, match="unknown field"):
        parse_kat("Count = 1\nTag = 00\n")
