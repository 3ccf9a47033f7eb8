/**
 * Panel entry point: build the replica from REST, then follow the event
 * stream with since-resume. Reloading the page reconstructs the same
 * state because nothing lives only on the client.
 */

import { ControlClient } from './api.js';
import { PanelStore } from './store.js';
import { PanelUi } from './ui.js';

const client = new ControlClient(window.location.origin);
const store = new PanelStore();
const ui = new PanelUi(client, store);

async function refreshReplica(): Promise<void> {
  store.setBox(await client.boxState());
  store.setNodes(await client.nodes());
  store.setAttacker(await client.attacker());
  const page = await client.transcript(store.state.nextSeq);
  for (const entry of page.entries) store.applyTranscript(entry);
}

async function followStream(): Promise<void> {
  for (;;) {
    try {
      await refreshReplica();
      store.setConnected(true);
      await client.streamEvents(store.state.nextSeq, (event) => {
        store.applyStreamEvent(event);
        if (store.state.gapDetected) {
          // stale replica: fall out and resync from REST
          throw new Error('transcript gap');
        }
      });
    } catch {
      // connection lost or gap detected
    }
    store.state.gapDetected = false;
    store.setConnected(false);
    await new Promise((resolve) => setTimeout(resolve, 1000));
  }
}

// periodic node/session refresh: placement and stages change server-side
async function pollNodes(): Promise<void> {
  for (;;) {
    await new Promise((resolve) => setTimeout(resolve, 1500));
    if (!store.state.connected) continue;
    try {
      store.setNodes(await client.nodes());
      store.setAttacker(await client.attacker());
    } catch {
      // transient; the stream loop owns reconnect
    }
  }
}

ui.mount();
void followStream();
void pollNodes();
