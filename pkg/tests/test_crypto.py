from hypothesis import given, strategies as st

from hashgraph.crypto import (
    DIGEST_SIZE,
    SIGNATURE_SIZE,
    KeyPair,
    Signer,
    hash_event,
    middle_bit,
    sign,
    verify,
    xor_bytes,
)


def test_hash_is_deterministic_and_sized():
    assert hash_event(b"abc") == hash_event(b"abc")
    assert len(hash_event(b"")) == DIGEST_SIZE
    assert hash_event(b"abc") != hash_event(b"abd")


def test_keys_depend_on_party_and_seed():
    assert KeyPair.derive(0, 1).public == KeyPair.derive(0, 1).public
    assert KeyPair.derive(0, 1).public != KeyPair.derive(1, 1).public
    assert KeyPair.derive(0, 1).public != KeyPair.derive(0, 2).public


@given(st.binary(max_size=200))
def test_sign_verify_roundtrip(msg):
    signer = Signer(3, seed=7)
    sig = signer.sign(1, msg)
    assert len(sig) == SIGNATURE_SIZE
    assert signer.verify(1, msg, sig)
    assert not signer.verify(2, msg, sig)
    assert not signer.verify(1, msg + b"x", sig)


def test_verify_rejects_unknown_key_and_bad_length():
    key = KeyPair.derive(0, 99)
    sig = sign(key, b"m")
    assert verify(key.public, b"m", sig)
    assert not verify(b"\x00" * 32, b"m", sig)
    assert not verify(key.public, b"m", sig[:-1])
    assert not Signer(2, 0).verify(5, b"m", sig)


def test_middle_bit_is_msb_of_byte_16():
    sig = bytearray(32)
    assert middle_bit(bytes(sig)) == 0
    sig[16] = 0x80
    assert middle_bit(bytes(sig)) == 1
    sig[16] = 0x7F
    sig[15] = 0xFF
    assert middle_bit(bytes(sig)) == 0


def test_middle_bit_is_roughly_fair():
    signer = Signer(1, 0)
    ones = sum(middle_bit(signer.sign(0, i.to_bytes(4, "big"))) for i in range(4000))
    assert 1800 < ones < 2200


@given(st.binary(min_size=4, max_size=4), st.binary(min_size=4, max_size=4))
def test_xor_is_an_involution(a, b):
    assert xor_bytes(xor_bytes(a, b), b) == a


def test_xor_example():
    a = b"\xf0" + bytes(31)
    b = b"\x0f" + bytes(31)
    c = b"\xff" + bytes(31)
    assert xor_bytes(xor_bytes(a, b), c)[0] == 0x00
