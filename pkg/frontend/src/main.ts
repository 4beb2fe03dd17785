/** Browser entry point. */

import { ApiClient } from './api.js';
import { App } from './app.js';

const STORAGE_KEY = 'drivelens.reviewer';

function reviewerName(): string {
  const fromUrl = new URLSearchParams(window.location.search).get('reviewer');
  if (fromUrl !== null && fromUrl.trim() !== '') {
    window.localStorage.setItem(STORAGE_KEY, fromUrl.trim());
    return fromUrl.trim();
  }
  const stored = window.localStorage.getItem(STORAGE_KEY);
  if (stored !== null && stored !== '') {
    return stored;
  }
  const typed = window.prompt('Reviewer id for the audit log:')?.trim();
  const name = typed !== undefined && typed !== '' ? typed : `reviewer-${Date.now() % 100000}`;
  window.localStorage.setItem(STORAGE_KEY, name);
  return name;
}

const root = document.getElementById('app');
if (root === null) {
  throw new Error('missing #app element');
}
const app = new App(root, new ApiClient(), reviewerName());
void app.start();
