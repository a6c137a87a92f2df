#!/usr/bin/env node
// Regenerates fixtures/compiled/* and fixtures/db/manifest.tsv from fixtures/src.
//
//   npm install solc@0.8.26
//   node fixtures/generate.js
//
// SOLC_JS may point at a solc-js module directory when it is not resolvable
// from here. Tests only read the generated files; no compiler is needed to
// run them.

const fs = require('fs');
const path = require('path');
const solc = require(process.env.SOLC_JS || 'solc');

const ROOT = __dirname;
const SRC = path.join(ROOT, 'src');
const OUT = path.join(ROOT, 'compiled');

// name, source file (relative to src/), contract
const TARGETS = [
  ['AddressHarness', 'db/AddressHarness.sol', 'AddressHarness'],
  ['SwapUtilsHarness', 'db/SwapUtilsHarness.sol', 'SwapUtilsHarness'],
  ['MetaSwapUtilsHarness', 'db/MetaSwapUtilsHarness.sol', 'MetaSwapUtilsHarness'],
  ['FeeMathHarness', 'db/FeeMathHarness.sol', 'FeeMathHarness'],
  ['RewardMathHarness', 'db/RewardMathHarness.sol', 'RewardMathHarness'],
  ['OwnableHarness', 'db/OwnableHarness.sol', 'OwnableHarness'],
  ['ERC20Harness', 'db/ERC20Harness.sol', 'ERC20Harness'],
  ['ECDSAHarness', 'db/ECDSAHarness.sol', 'ECDSAHarness'],
];
for (const f of fs.readdirSync(path.join(SRC, 'corpus')).sort()) {
  if (!f.endsWith('.sol')) continue;
  const name = f.slice(0, -4);
  TARGETS.push([name, `corpus/${f}`, name]);
}

// subcontract, version, method, harness, library contract, function name, visibility
const DB_METHODS = [
  ['Address', '4.9.0', 'CallWithValue', 'AddressHarness', 'Address', 'CallWithValue', 'internal'],
  ['Address', '4.9.0', 'sendValue', 'AddressHarness', 'Address', 'sendValue', 'internal'],
  ['SwapUtils', '1.0.0', '_xp', 'SwapUtilsHarness', 'SwapUtils', '_xp', 'internal'],
  ['MetaSwapUtils', '1.0.0', '_xp', 'MetaSwapUtilsHarness', 'MetaSwapUtils', '_xp', 'internal'],
  ['FeeMath', '1.0.0', 'calcFee', 'FeeMathHarness', 'FeeMath', 'calcFee', 'internal'],
  ['FeeMathV2', '2.0.0', 'calcFee', 'FeeMathHarness', 'FeeMathV2', 'calcFee', 'internal'],
  ['RewardMath', '1.2.0', 'accrue', 'RewardMathHarness', 'RewardMath', 'accrue', 'internal'],
  ['RewardMathLegacy', '0.9.0', 'accrue', 'RewardMathHarness', 'RewardMathLegacy', 'accrue', 'internal'],
  ['Ownable', '4.9.0', '_transferOwnership', 'OwnableHarness', 'Ownable', '_transferOwnership', 'internal'],
  ['ERC20', '4.9.0', '_transfer', 'ERC20Harness', 'ERC20', '_transfer', 'internal'],
  ['ERC20', '4.9.0', '_mint', 'ERC20Harness', 'ERC20', '_mint', 'internal'],
  ['ERC20', '4.9.0', '_burn', 'ERC20Harness', 'ERC20', '_burn', 'internal'],
  ['ECDSA', '4.9.0', 'recover', 'ECDSAHarness', 'ECDSA', 'recover', 'internal'],
];

function findImports(p) {
  const full = path.join(SRC, p);
  if (fs.existsSync(full)) return { contents: fs.readFileSync(full, 'utf8') };
  return { error: `not found: ${p}` };
}

function compile(file) {
  const input = {
    language: 'Solidity',
    sources: { [file]: { content: fs.readFileSync(path.join(SRC, file), 'utf8') } },
    settings: {
      optimizer: { enabled: false },
      evmVersion: 'cancun',
      outputSelection: {
        '*': {
          '*': ['evm.deployedBytecode.object', 'evm.deployedBytecode.sourceMap', 'evm.methodIdentifiers'],
          '': ['ast'],
        },
      },
    },
  };
  const out = JSON.parse(solc.compile(JSON.stringify(input), { import: findImports }));
  for (const e of out.errors || []) {
    if (e.severity === 'error') throw new Error(e.formattedMessage);
  }
  return out;
}

function disassemble(hex) {
  const code = Buffer.from(hex, 'hex');
  const ins = [];
  let pc = 0;
  while (pc < code.length) {
    const op = code[pc];
    const n = op >= 0x60 && op <= 0x7f ? op - 0x5f : 0;
    ins.push({ pc, op });
    pc += 1 + n;
  }
  return ins;
}

function expandSourceMap(map) {
  const out = [];
  let prev = ['0', '0', '-1', '-', '0'];
  for (const entry of map.split(';')) {
    const cur = prev.slice();
    entry.split(':').forEach((p, i) => {
      if (p !== '') cur[i] = p;
    });
    out.push(cur);
    prev = cur;
  }
  return out;
}

function collectFunctions(out) {
  const fns = [];
  for (const unit of Object.values(out.sources)) {
    (function walk(n, contract) {
      if (!n || typeof n !== 'object') return;
      if (n.nodeType === 'ContractDefinition') contract = n.name;
      if (n.nodeType === 'FunctionDefinition' || n.nodeType === 'ModifierDefinition') {
        const [s, l, f] = n.src.split(':').map(Number);
        fns.push({
          contract,
          name: n.name || n.kind,
          kind: n.nodeType === 'ModifierDefinition' ? 'modifier' : n.kind,
          visibility: n.visibility,
          start: s,
          length: l,
          file: f,
        });
      }
      for (const v of Object.values(n)) {
        if (Array.isArray(v)) v.forEach((x) => walk(x, contract));
        else if (v && typeof v === 'object') walk(v, contract);
      }
    })(unit.ast);
  }
  return fns;
}

function annotate(bytecode, sourceMap, fns) {
  const ins = disassemble(bytecode);
  const entries = expandSourceMap(sourceMap);
  const owners = [];
  const calls = [];
  const returns = [];
  ins.forEach((x, k) => {
    if (k >= entries.length) {
      owners.push(null);
      return;
    }
    const [s, l, f, j] = [Number(entries[k][0]), Number(entries[k][1]), Number(entries[k][2]), entries[k][3]];
    if (x.op === 0x56 && j === 'i') calls.push(x.pc);
    if (x.op === 0x56 && j === 'o') returns.push(x.pc);
    let best = null;
    for (const fn of fns) {
      if (fn.file !== f) continue;
      if (fn.start <= s && s + l <= fn.start + fn.length) {
        if (best === null || fn.length < best.length) best = fn;
      }
    }
    owners.push(best);
  });
  const functions = [];
  for (const fn of fns) {
    const runs = [];
    let cur = null;
    ins.forEach((x, k) => {
      if (owners[k] === fn) {
        if (cur) cur[1] = x.pc;
        else cur = [x.pc, x.pc];
      } else if (cur) {
        runs.push(cur);
        cur = null;
      }
    });
    if (cur) runs.push(cur);
    if (runs.length === 0) continue;
    functions.push({
      contract: fn.contract,
      name: fn.name,
      kind: fn.kind,
      visibility: fn.visibility || null,
      first: runs[0][0],
      last: runs[runs.length - 1][1],
      runs,
    });
  }
  return { functions, calls, returns };
}

fs.mkdirSync(OUT, { recursive: true });
const cache = new Map();
const metas = new Map();
for (const [name, file, contract] of TARGETS) {
  if (!cache.has(file)) cache.set(file, compile(file));
  const out = cache.get(file);
  const c = out.contracts[file][contract];
  const bytecode = c.evm.deployedBytecode.object;
  const { functions, calls, returns } = annotate(bytecode, c.evm.deployedBytecode.sourceMap, collectFunctions(out));
  const meta = {
    contract,
    source: file,
    compiler: solc.version(),
    optimizer: false,
    methods: c.evm.methodIdentifiers,
    functions,
    calls,
    returns,
  };
  fs.writeFileSync(path.join(OUT, `${name}.hex`), `0x${bytecode}\n`);
  fs.writeFileSync(path.join(OUT, `${name}.meta.json`), `${JSON.stringify(meta, null, 1)}\n`);
  metas.set(name, meta);
  console.log(`${name}: ${bytecode.length / 2} bytes, ${functions.length} functions`);
}

const rows = ['# file\tsubcontract\tversion\tmethod\tlocator\tvisibility'];
for (const [sub, version, method, harness, lib, fname, vis] of DB_METHODS) {
  const fn = metas.get(harness).functions.find((f) => f.contract === lib && f.name === fname);
  if (!fn) throw new Error(`${lib}.${fname} not found in ${harness}`);
  rows.push([`${harness}.hex`, sub, version, method, `offset=0x${fn.first.toString(16)}`, vis].join('\t'));
}
fs.mkdirSync(path.join(ROOT, 'db'), { recursive: true });
fs.writeFileSync(path.join(ROOT, 'db', 'manifest.tsv'), `${rows.join('\n')}\n`);
