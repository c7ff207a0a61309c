#!/usr/bin/env python3
"""Regenerates fixtures/dataset: twelve migration instances (three per
compilation-error category) and one mock transcript per instance.

Transcripts are scripted so that instances get fixed at iteration 1, 2 or 3
(four each). Wrong attempts are prose without edits, edits whose SEARCH text
does not exist, or edits that apply but leave a compile error.

Run from the repository root. Pass --check to also compile every error
contract and groundtruth with the configured compilers.
"""

import json
import os
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
OUT = os.path.join(ROOT, "fixtures", "dataset")

KB = {
    "scope": "eee4b3e8b340",
    "address_split": "4ada65ec69ae",
    "throw": "5cb2d2e50322",
    "ctor": "8baaecfe8d61",
    "var": "486a4639c9cd",
    "hex_unit": "9b38c98dde70",
    "fallback": "9275bfcce569",
    "payable": "430c5230d857",
    "now": "720899777e68",
    "byte": "faf740f030dd",
}


def block(edits):
    out = []
    for search, replace in edits:
        out.append("<<<<<< SEARCH\n" + search + "\n=======\n" + replace + "\n>>>>>> REPLACE\n")
    return "\n".join(out)


def apply(source, edits):
    for search, replace in edits:
        assert source.count(search + "\n") == 1, (search, source)
        source = source.replace(search + "\n", replace + "\n", 1)
    return source


INSTANCES = [
    dict(
        id="parser-byte",
        bc="byte", src="0.7", tgt="0.8", cat="Parser", fix_at=1, hint="byte",
        source="""pragma solidity >=0.7.0 <0.9.0;

contract Registry {
    mapping(address => byte) public flags;

    function mark(byte flag) public {
        flags[msg.sender] = flag;
    }
}
""",
        fix=[("    mapping(address => byte) public flags;", "    mapping(address => bytes1) public flags;"),
             ("    function mark(byte flag) public {", "    function mark(bytes1 flag) public {")],
    ),
    dict(
        id="parser-fallback",
        bc="fallback", src="0.5", tgt="0.6", cat="Parser", fix_at=2, hint="function ()",
        source="""pragma solidity >=0.5.0 <0.9.0;

contract Vault {
    uint256 public deposits;

    function () external payable {
        deposits += msg.value;
    }
}
""",
        fix=[("    function () external payable {", "    receive() external payable {")],
        wrong=["prose"],
    ),
    dict(
        id="parser-var",
        bc="var", src="0.4", tgt="0.8", cat="Parser", fix_at=3, hint="var i",
        source="""pragma solidity >=0.4.0 <0.9.0;

contract Counter {
    uint256 public total;

    function addAll(uint256[] memory values) public {
        for (var i = 0; i < values.length; i++) {
            total += values[i];
        }
    }
}
""",
        fix=[("        for (var i = 0; i < values.length; i++) {", "        for (uint256 i = 0; i < values.length; i++) {")],
        wrong=["prose", "missing"],
    ),
    dict(
        id="declaration-loop-scope",
        bc="scope", src="0.4", tgt="0.8", cat="Declaration", fix_at=1, hint="return i;",
        source="""pragma solidity >=0.4.0 <0.9.0;

contract Lottery {
    uint256[] public tickets;

    function firstEmpty() public view returns (uint256) {
        for (uint256 i = 0; i < tickets.length; i++) {
            if (tickets[i] == 0) {
                break;
            }
        }
        return i;
    }
}
""",
        fix=[("        for (uint256 i = 0; i < tickets.length; i++) {",
              "        uint256 i = 0;\n        for (; i < tickets.length; i++) {")],
    ),
    dict(
        id="declaration-branch-scope",
        bc="scope", src="0.4", tgt="0.8", cat="Declaration", fix_at=2, hint="price = base;",
        source="""pragma solidity >=0.4.0 <0.9.0;

contract Pricing {
    uint256 public base = 100;

    function quote(bool discount) public view returns (uint256) {
        if (discount) {
            uint256 price = base / 2;
        } else {
            price = base;
        }
        return price;
    }
}
""",
        fix=[("        if (discount) {\n            uint256 price = base / 2;",
              "        uint256 price;\n        if (discount) {\n            price = base / 2;")],
        wrong=["missing"],
    ),
    dict(
        id="declaration-loop-local",
        bc="scope", src="0.4", tgt="0.8", cat="Declaration", fix_at=3, hint="return hit;",
        source="""pragma solidity >=0.4.0 <0.9.0;

contract Search {
    uint256[] public values;

    function contains(uint256 needle) public view returns (bool) {
        for (uint256 j = 0; j < values.length; j++) {
            bool hit = values[j] == needle;
            if (hit) {
                return true;
            }
        }
        return hit;
    }
}
""",
        fix=[("        return hit;", "        return false;")],
        wrong=["missing", "prose"],
    ),
    dict(
        id="syntax-throw",
        bc="throw", src="0.4", tgt="0.8", cat="Syntax", fix_at=1, hint="throw;",
        source="""pragma solidity >=0.4.0 <0.9.0;

contract Escrow {
    address public buyer;
    bool public released;

    function release() public {
        if (msg.sender != buyer) {
            throw;
        }
        released = true;
    }
}
""",
        fix=[("            throw;", "            revert();")],
    ),
    dict(
        id="syntax-named-constructor",
        bc="ctor", src="0.4", tgt="0.5", cat="Syntax", fix_at=2, hint="function Token",
        source="""pragma solidity >=0.4.0 <0.9.0;

contract Token {
    address public owner;
    uint256 public supply;

    function Token(uint256 initial) public {
        owner = msg.sender;
        supply = initial;
    }
}
""",
        fix=[("    function Token(uint256 initial) public {", "    constructor(uint256 initial) public {")],
        wrong=["prose"],
    ),
    dict(
        id="syntax-hex-unit",
        bc="hex_unit", src="0.4", tgt="0.8", cat="Syntax", fix_at=3, hint="0x10 wei",
        source="""pragma solidity >=0.4.0 <0.9.0;

contract Fees {
    uint256 public fee = 0x10 wei;

    function due(uint256 count) public view returns (uint256) {
        return fee * count;
    }
}
""",
        fix=[("    uint256 public fee = 0x10 wei;", "    uint256 public fee = 16 wei;")],
        wrong=["prose", "prose"],
    ),
    dict(
        id="type-transfer",
        bc="address_split", src="0.4", tgt="0.8", cat="Type", fix_at=1, hint="msg.sender.transfer",
        source="""pragma solidity >=0.4.0 <0.9.0;

contract Refund {
    mapping(address => uint256) public owed;

    function claim() public {
        uint256 amount = owed[msg.sender];
        owed[msg.sender] = 0;
        msg.sender.transfer(amount);
    }
}
""",
        fix=[("        msg.sender.transfer(amount);", "        payable(msg.sender).transfer(amount);")],
    ),
    dict(
        id="type-payable-assignment",
        bc="payable", src="0.5", tgt="0.8", cat="Type", fix_at=2, hint="highestBidder = msg.sender;",
        source="""pragma solidity >=0.5.0 <0.9.0;

contract Auction {
    address payable public highestBidder;
    uint256 public highestBid;

    function bid() public payable {
        require(msg.value > highestBid, "bid too low");
        highestBidder = msg.sender;
        highestBid = msg.value;
    }
}
""",
        fix=[("        highestBidder = msg.sender;", "        highestBidder = payable(msg.sender);")],
        wrong=["missing"],
    ),
    dict(
        id="type-now",
        bc="now", src="0.6", tgt="0.7", cat="Type", fix_at=3, hint="now",
        source="""pragma solidity >=0.6.0 <0.9.0;

contract Timelock {
    uint256 public unlockAt;

    function lock(uint256 duration) public {
        unlockAt = now + duration;
    }

    function unlocked() public view returns (bool) {
        return now >= unlockAt;
    }
}
""",
        # The second attempt fixes only the first use; the third fixes the other.
        fix=[("        unlockAt = now + duration;", "        unlockAt = block.timestamp + duration;")],
        fix_rest=[("        return now >= unlockAt;", "        return block.timestamp >= unlockAt;")],
        wrong=["prose", "prose"],
    ),
]

PROSE = ("The compiler rejects this code because of a breaking change in the newer "
         "Solidity version. Update the flagged statement to the new syntax and it should compile.")


def transcript(inst):
    lines = []
    wrong = inst.get("wrong", [])
    for w in wrong:
        if w == "prose":
            lines.append({"response": PROSE})
        elif w == "missing":
            lines.append({"response": "Here is the fix:\n\n" + block([("    // no such line in the contract", "    // replacement")])})
    if "fix_rest" in inst:
        # Partial fix applied as an ordinary attempt; the final one finishes.
        lines[-1] = {"response": block(inst["fix"])}
        lines.append({"match_hint": inst["hint"], "response": block(inst["fix_rest"])})
    else:
        lines.append({"match_hint": inst["hint"], "response": "```\n" + block(inst["fix"]) + "```\n"})
    assert len(lines) == inst["fix_at"], inst["id"]
    return lines


def groundtruth(inst):
    out = apply(inst["source"], inst["fix"])
    if "fix_rest" in inst:
        out = apply(out, inst["fix_rest"])
    return out


def compile_ok(source, version):
    import re
    with open(os.environ.get("SOLFIX_COMPILERS", os.path.join(ROOT, "tools", "compilers.toml"))) as f:
        table = dict(re.findall(r'^"([^"]+)"\s*=\s*"([^"]+)"', f.read(), re.M))
    exe = table[version]
    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "contract.sol")
        with open(p, "w") as f:
            f.write(source)
        r = subprocess.run([exe, p], capture_output=True, text=True)
        out = r.stdout + r.stderr
        return not any(k in out for k in ("Error:", "Error ")), out


def main():
    check = "--check" in sys.argv
    os.makedirs(os.path.join(OUT, "mock"), exist_ok=True)
    rows = []
    for inst in INSTANCES:
        gt = groundtruth(inst)
        if check:
            ok, out = compile_ok(inst["source"], inst["tgt"])
            assert not ok, (inst["id"], "error contract compiles")
            ok, out = compile_ok(gt, inst["tgt"])
            assert ok, (inst["id"], out)
        rows.append({
            "id": inst["id"],
            "breaking_change_id": KB[inst["bc"]],
            "source_version": inst["src"],
            "target_version": inst["tgt"],
            "error_contract": inst["source"],
            "groundtruth_patch": gt,
            "error_category": inst["cat"],
        })
        with open(os.path.join(OUT, "mock", inst["id"] + ".jsonl"), "w") as f:
            for line in transcript(inst):
                f.write(json.dumps(line, sort_keys=True) + "\n")
    with open(os.path.join(OUT, "dataset.jsonl"), "w") as f:
        for r in rows:
            f.write(json.dumps(r) + "\n")
    with open(os.path.join(OUT, "fix_at.json"), "w") as f:
        json.dump({i["id"]: i["fix_at"] for i in INSTANCES}, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {len(rows)} instances to {OUT}")


if __name__ == "__main__":
    main()
