/**
 * Panel mirror test: drive the interactive batch4 flow through the
 * panel's own transport and store modules against a real `serve`
 * process, and check it reproduces the scripted-run outcome.
 * (No browser binary in this environment, so a scripted client run
 * stands in for a scripted browser run; rendering logic is covered by
 * the DOM-free store tests.)
 */

import { spawn, ChildProcess } from 'node:child_process';
import { mkdtempSync, readFileSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join, resolve } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ControlClient } from '../src/api.js';
import { PanelStore, buttonsEnabled } from '../src/store.js';

const REPO_ROOT = resolve(__dirname, '..', '..');
const PORT = 18200 + (process.pid % 1000);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
const client = new ControlClient(BASE);
const store = new PanelStore();
const streamAbort = new AbortController();
let streamDone: Promise<void>;

function sleep(ms: number): Promise<void> {
  return new Promise((r) => setTimeout(r, ms));
}

async function waitFor<T>(
  predicate: () => T | Promise<T>,
  timeoutMs = 20000,
  intervalMs = 50,
): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const value = await predicate();
    if (value) return value;
    if (Date.now() > deadline) throw new Error('timed out waiting for condition');
    await sleep(intervalMs);
  }
}

beforeAll(async () => {
  const scenarioPath = join(
    REPO_ROOT,
    'src',
    'faradaybox',
    'scenarios',
    'batch4.json',
  );
  const scenario = JSON.parse(readFileSync(scenarioPath, 'utf-8'));
  scenario.box.deploy_timeout_s = 4.0;
  scenario.operator_script = []; // the panel is the operator
  const tmp = mkdtempSync(join(tmpdir(), 'panel-mirror-'));
  const interactivePath = join(tmp, 'batch4-interactive.json');
  writeFileSync(interactivePath, JSON.stringify(scenario));

  server = spawn(
    'python3',
    [
      '-m',
      'faradaybox.cli',
      'serve',
      '--scenario',
      interactivePath,
      '--listen',
      `127.0.0.1:${PORT}`,
      '--time-scale',
      '50',
    ],
    { cwd: REPO_ROOT, stdio: ['ignore', 'pipe', 'pipe'] },
  );
  await waitFor(async () => {
    try {
      await client.boxState();
      return true;
    } catch {
      return false;
    }
  }, 15000);

  // replica exactly as the browser builds it: REST snapshot, then stream
  store.setBox(await client.boxState());
  store.setNodes(await client.nodes());
  store.setAttacker(await client.attacker());
  const page = await client.transcript(0);
  for (const entry of page.entries) store.applyTranscript(entry);
  streamDone = client
    .streamEvents(store.state.nextSeq, (ev) => store.applyStreamEvent(ev), streamAbort.signal)
    .catch(() => undefined);
  store.setConnected(true);
}, 30000);

afterAll(async () => {
  streamAbort.abort();
  await streamDone?.catch(() => undefined);
  server?.kill();
});

describe('interactive batch4 through the panel transport', () => {
  it('reproduces the scripted batch outcome', async () => {
    expect((await client.sendEvent('PowerOn')).ok).toBe(true);
    expect((await client.sendEvent('PressAcquire')).ok).toBe(true);
    await waitFor(() => store.state.box !== null && store.state.box.keys === 10);

    for (let id = 0; id < 4; id++) {
      expect((await client.placeNode(id)).ok).toBe(true);
    }
    expect((await client.sendEvent('PressDeploy')).ok).toBe(true);
    expect((await client.sendEvent('LidClosed')).ok).toBe(true);

    await waitFor(() => store.hasUtterance('session-complete'), 25000);
    const announcement = store.state.transcript.find(
      (e) => e.utterance_id === 'session-complete',
    );
    expect(announcement?.text).toContain('4 sensor nodes provisioned');

    expect((await client.sendEvent('LidOpened')).ok).toBe(true);
    await waitFor(() => store.state.box?.state === 'BoxOpen_FW');

    const nodes = await client.nodes();
    expect(nodes.filter((n) => n.mode === 'runtime')).toHaveLength(4);
    expect(store.state.box?.keys).toBe(6);
  }, 40000);

  it('renders the transcript gap-free in sequence order', () => {
    const seqs = store.state.transcript.map((e) => e.seq);
    expect(seqs[0]).toBe(0);
    expect(seqs).toEqual(Array.from({ length: seqs.length }, (_, i) => i));
    expect(store.state.gapDetected).toBe(false);
    const ids = store.state.transcript.map((e) => e.utterance_id);
    expect(ids.filter((id) => id === 'session-complete')).toHaveLength(1);
  });

  it('disables buttons whenever the lid is closed, and the server agrees', async () => {
    expect((await client.sendEvent('LidClosed')).ok).toBe(true);
    await waitFor(() => store.state.box !== null && !store.state.box.lid_open);
    expect(buttonsEnabled(store.state)).toBe(false);

    const deploy = await client.sendEvent('PressDeploy');
    expect(deploy.status).toBe(409);
    const place = await client.placeNode(0);
    expect(place.status).toBe(409);

    expect((await client.sendEvent('LidOpened')).ok).toBe(true);
    await waitFor(() => store.state.box !== null && store.state.box.lid_open);
    expect(buttonsEnabled(store.state)).toBe(true);
  }, 20000);

  it('reload reconstructs the identical replica from REST + replay', async () => {
    const reloaded = new PanelStore();
    reloaded.setBox(await client.boxState());
    const page = await client.transcript(0);
    for (const entry of page.entries) reloaded.applyTranscript(entry);
    expect(reloaded.state.transcript).toEqual(store.state.transcript);
    expect(reloaded.state.nextSeq).toBe(store.state.nextSeq);
  });

  it('reports the passive eavesdropper as non-toggleable', async () => {
    const attacker = await client.attacker();
    expect(attacker.kind).toBe('eavesdropper');
    expect(attacker.active).toBe(true);
    const toggle = await client.toggleAttacker(false);
    expect(toggle.status).toBe(409);
  });
});
